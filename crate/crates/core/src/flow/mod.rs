//! Trajectories, dense output, tangent dynamics and trapping checks.

pub mod dop853;
mod tangent;
mod trap;

pub use dop853::{accepted_steps, Dop853, OdeSystem, StepperOptions};
pub use tangent::{
    tangent_flow, tangent_flow_until, tangent_flow_with, FrameEvolution, TangentSystem,
};
pub use trap::{
    minimal_trapping_radius, trap_check, Region, TrapOptions, TrapReport, TrapViolation,
};

use crate::error::{Error, Result};
use crate::model::VectorFieldModel;

/// Default renormalization interval for tangent integration.
pub const RENORM_INTERVAL: f64 = 0.5;

impl OdeSystem for VectorFieldModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn rhs(&self, y: &[f64], dy: &mut [f64]) {
        self.eval_into(y, dy);
    }
}

pub fn check_tol(tol: f64) -> Result<()> {
    if !(1e-12..=1e-3).contains(&tol) {
        return Err(Error::Input(format!(
            "tolerance {tol:e} outside [1e-12, 1e-3]"
        )));
    }
    Ok(())
}

/// Solution of an initial value problem with dense output on `[t0, t1]`
/// (or `[t1, t0]` when integrating backward).
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub model_id: String,
    pub dim: usize,
    pub t0: f64,
    pub t1: f64,
    pub tol: f64,
    times: Vec<f64>,
    states: Vec<f64>,
    dense: Vec<f64>,
    pub steps: usize,
    pub rejected: usize,
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.times.len() - 1)
    }

    fn contains(&self, t: f64) -> bool {
        let (lo, hi) = if self.t0 <= self.t1 {
            (self.t0, self.t1)
        } else {
            (self.t1, self.t0)
        };
        t >= lo && t <= hi
    }

    /// State at time `t`; exact at node times, interpolated between them.
    pub fn flow_at(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.flow_at_into(t, &mut out)?;
        Ok(out)
    }

    pub fn flow_at_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        if !t.is_finite() || !self.contains(t) {
            return Err(Error::Range {
                t,
                t0: self.t0,
                t1: self.t1,
            });
        }
        let forward = self.t1 >= self.t0;
        // index of first node not before t (in integration order)
        let idx = self
            .times
            .partition_point(|&s| if forward { s < t } else { s > t });
        let idx = idx.min(self.times.len() - 1);
        if self.times[idx] == t || idx == 0 {
            out.copy_from_slice(self.state(idx));
            return Ok(());
        }
        let n = self.dim;
        let step = idx - 1;
        let c = &self.dense[step * 8 * n..(step + 1) * 8 * n];
        let h = self.times[idx] - self.times[step];
        dop853::eval_dense(c, n, self.times[step], h, t, out);
        Ok(())
    }

    /// Node table with header `t,x1,...,xd`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t");
        for i in 1..=self.dim {
            s.push_str(&format!(",x{i}"));
        }
        s.push('\n');
        for (k, t) in self.times.iter().enumerate() {
            s.push_str(&format!("{t:.17e}"));
            for v in self.state(k) {
                s.push_str(&format!(",{v:.17e}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Integrates `model` from `x0` over `span = (t0, t1)`; `t1 < t0` integrates backward.
pub fn integrate(
    model: &VectorFieldModel,
    x0: &[f64],
    span: (f64, f64),
    tol: f64,
) -> Result<Trajectory> {
    let mut tr = integrate_system(model, x0, span, tol)?;
    tr.model_id = model.id.clone();
    Ok(tr)
}

pub fn integrate_system<S: OdeSystem + ?Sized>(
    sys: &S,
    x0: &[f64],
    span: (f64, f64),
    tol: f64,
) -> Result<Trajectory> {
    check_tol(tol)?;
    let (t0, t1) = span;
    if !t0.is_finite() || !t1.is_finite() {
        return Err(Error::Input("time span must be finite".into()));
    }
    let n = sys.dim();
    if x0.len() != n {
        return Err(Error::Input(format!(
            "initial state has length {} but dim is {n}",
            x0.len()
        )));
    }
    let mut tr = Trajectory {
        model_id: String::new(),
        dim: n,
        t0,
        t1,
        tol,
        times: vec![t0],
        states: x0.to_vec(),
        dense: Vec::new(),
        steps: 0,
        rejected: 0,
    };
    if t1 == t0 {
        return Ok(tr);
    }
    let mut st = Dop853::new(sys, t0, x0, t1 - t0, StepperOptions::with_tol(tol))?;
    while st.t() != t1 {
        st.step(t1)?;
        tr.times.push(st.t());
        tr.states.extend_from_slice(st.y());
        tr.dense.extend_from_slice(st.dense_coefficients());
    }
    tr.steps = st.steps;
    tr.rejected = st.rejected;
    Ok(tr)
}

/// Final state of the flow without storing the trajectory.
pub fn flow_map<S: OdeSystem + ?Sized>(sys: &S, x0: &[f64], t: f64, tol: f64) -> Result<Vec<f64>> {
    check_tol(tol)?;
    if t == 0.0 {
        return Ok(x0.to_vec());
    }
    let mut st = Dop853::new(sys, 0.0, x0, t, StepperOptions::with_tol(tol))?;
    while st.t() != t {
        st.step(t)?;
    }
    Ok(st.y().to_vec())
}

/// Samples the flow at `t_start + k·dt`, `k = 0..count`, starting from `x0` at time 0.
pub fn sample_grid<S: OdeSystem + ?Sized>(
    sys: &S,
    x0: &[f64],
    t_start: f64,
    dt: f64,
    count: usize,
    tol: f64,
) -> Result<Vec<Vec<f64>>> {
    check_tol(tol)?;
    if !(dt > 0.0) || t_start < 0.0 {
        return Err(Error::Input(
            "sample spacing must be positive and start non-negative".into(),
        ));
    }
    let n = sys.dim();
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return Ok(out);
    }
    let t_end = t_start + dt * (count - 1) as f64;
    if t_end == 0.0 {
        out.push(x0.to_vec());
        return Ok(out);
    }
    let mut st = Dop853::new(sys, 0.0, x0, 1.0, StepperOptions::with_tol(tol))?;
    let mut k = 0usize;
    let mut buf = vec![0.0; n];
    while k < count && t_start + dt * k as f64 <= 0.0 {
        out.push(x0.to_vec());
        k += 1;
    }
    while k < count {
        st.step(t_end)?;
        while k < count {
            let tk = if k == count - 1 {
                t_end
            } else {
                t_start + dt * k as f64
            };
            if tk > st.t() {
                break;
            }
            st.interpolate(tk, &mut buf);
            out.push(buf.clone());
            k += 1;
        }
    }
    Ok(out)
}

/// Points on a long orbit after a transient: `count` samples spaced `spacing` apart.
pub fn attractor_sample(
    model: &VectorFieldModel,
    seed_point: &[f64],
    transient: f64,
    count: usize,
    spacing: f64,
    tol: f64,
) -> Result<Vec<Vec<f64>>> {
    sample_grid(model, seed_point, transient, spacing, count, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Harmonic;
    impl OdeSystem for Harmonic {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, y: &[f64], dy: &mut [f64]) {
            dy[0] = y[1];
            dy[1] = -y[0];
        }
    }

    #[test]
    fn harmonic_oscillator_is_accurate() {
        let tr = integrate_system(&Harmonic, &[1.0, 0.0], (0.0, 10.0), 1e-10).unwrap();
        let x = tr.final_state();
        assert!((x[0] - 10f64.cos()).abs() < 1e-8, "{}", x[0]);
        assert!((x[1] + 10f64.sin()).abs() < 1e-8);
        for k in 0..100 {
            let t = 0.1 * k as f64 + 0.037;
            let y = tr.flow_at(t).unwrap();
            assert!(
                (y[0] - t.cos()).abs() < 1e-8,
                "dense at {t}: {}",
                (y[0] - t.cos()).abs()
            );
        }
    }

    #[test]
    fn convergence_order_is_high() {
        let e = |tol| {
            let x = flow_map(&Harmonic, &[1.0, 0.0], 20.0, tol).unwrap();
            ((x[0] - 20f64.cos()).powi(2) + (x[1] + 20f64.sin()).powi(2)).sqrt()
        };
        let (e1, e2) = (e(1e-6), e(1e-10));
        assert!(e2 < e1 * 1e-2, "{e1} {e2}");
        assert!(e2 < 1e-8);
    }

    #[test]
    fn endpoints_and_nodes_are_exact() {
        let m = VectorFieldModel::lorenz_classic();
        let tr = integrate(&m, &[1.0, 1.0, 1.0], (0.0, 2.0), 1e-9).unwrap();
        assert_eq!(tr.times()[0], 0.0);
        assert_eq!(*tr.times().last().unwrap(), 2.0);
        assert_eq!(tr.flow_at(0.0).unwrap(), vec![1.0, 1.0, 1.0]);
        let k = tr.len() / 2;
        assert_eq!(tr.flow_at(tr.times()[k]).unwrap(), tr.state(k).to_vec());
        assert!(matches!(tr.flow_at(2.5), Err(Error::Range { .. })));
        assert!(matches!(tr.flow_at(-0.1), Err(Error::Range { .. })));
    }

    #[test]
    fn backward_integration_returns_home() {
        let m = VectorFieldModel::lorenz_classic();
        let x0 = [1.0, 2.0, 20.0];
        // backward Lorenz amplifies errors like exp(14.6 t), so keep the span short
        let x1 = flow_map(&m, &x0, 0.5, 1e-12).unwrap();
        let back = flow_map(&m, &x1, -0.5, 1e-12).unwrap();
        assert!(crate::linalg::dist(&back, &x0) < 1e-8, "{:?}", back);
        let tr = integrate(&m, &x1, (0.5, 0.0), 1e-12).unwrap();
        assert!(crate::linalg::dist(tr.final_state(), &x0) < 1e-8);
        assert!(tr.flow_at(0.25).is_ok());
    }

    #[test]
    fn rejects_bad_tolerance() {
        let m = VectorFieldModel::lorenz_classic();
        assert!(matches!(
            integrate(&m, &[1.0, 1.0, 1.0], (0.0, 1.0), 1e-2),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            integrate(&m, &[1.0, 1.0, 1.0], (0.0, 1.0), 1e-13),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn blowup_is_divergence() {
        let m = VectorFieldModel::polynomial(
            1,
            vec![crate::model::PolyTerm {
                target: 0,
                coeff: 1.0,
                exponents: vec![2],
            }],
        )
        .unwrap();
        let r = integrate(&m, &[1.0], (0.0, 2.0), 1e-9);
        assert!(
            matches!(
                r,
                Err(Error::Divergence { .. }) | Err(Error::IntegrationFailure { .. })
            ),
            "{r:?}"
        );
    }

    #[test]
    fn csv_header_and_rows() {
        let m = VectorFieldModel::lorenz_classic();
        let tr = integrate(&m, &[1.0, 1.0, 1.0], (0.0, 0.1), 1e-9).unwrap();
        let csv = tr.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,x2,x3");
        assert_eq!(lines.count(), tr.len());
    }

    #[test]
    fn grid_sampling_matches_flow_at() {
        let m = VectorFieldModel::lorenz_classic();
        let pts = sample_grid(&m, &[1.0, 1.0, 1.0], 1.0, 0.25, 5, 1e-10).unwrap();
        let tr = integrate(&m, &[1.0, 1.0, 1.0], (0.0, 2.0), 1e-10).unwrap();
        for (k, p) in pts.iter().enumerate() {
            let q = tr.flow_at(1.0 + 0.25 * k as f64).unwrap();
            assert!(crate::linalg::dist(p, &q) < 1e-7);
        }
    }
}
