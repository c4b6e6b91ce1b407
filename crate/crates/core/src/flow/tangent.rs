use nalgebra::DMatrix;

use super::dop853::{Dop853, OdeSystem, StepperOptions};
use super::{check_tol, RENORM_INTERVAL};
use crate::error::{Error, Result};
use crate::linalg::{compound2, pairs, qr_positive};
use crate::model::VectorFieldModel;

/// Base point together with a d×k block of tangent vectors (column-major).
pub struct TangentSystem<'a> {
    pub model: &'a VectorFieldModel,
    pub k: usize,
}

impl OdeSystem for TangentSystem<'_> {
    fn dim(&self) -> usize {
        self.model.dim * (1 + self.k)
    }

    fn rhs(&self, y: &[f64], dy: &mut [f64]) {
        let d = self.model.dim;
        let (x, v) = y.split_at(d);
        let (dx, dv) = dy.split_at_mut(d);
        self.model.eval_into(x, dx);
        let mut stack = [0.0f64; 64];
        let mut heap;
        let jac: &mut [f64] = if d * d <= 64 {
            &mut stack[..d * d]
        } else {
            heap = vec![0.0; d * d];
            &mut heap
        };
        self.model.jacobian_into(x, jac);
        for c in 0..self.k {
            let col = &v[c * d..(c + 1) * d];
            let out = &mut dv[c * d..(c + 1) * d];
            for i in 0..d {
                let row = &jac[i * d..(i + 1) * d];
                out[i] = row.iter().zip(col).map(|(a, b)| a * b).sum();
            }
        }
    }
}

/// Orthonormalized tangent frames along an orbit, with accumulated
/// per-direction and per-pair logarithmic growth.
#[derive(Debug, Clone)]
pub struct FrameEvolution {
    pub model_id: String,
    pub k: usize,
    /// Checkpoint times: multiples of the renormalization interval, then the final time.
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    /// Orthonormal frame at each checkpoint.
    pub frames: Vec<DMatrix<f64>>,
    /// Cumulative Σ log R_ii per column at each checkpoint.
    pub log_growth: Vec<Vec<f64>>,
    /// Cumulative log of the parallelogram area spanned by each column pair
    /// relative to its initial area (pairs in lexicographic order).
    pub log_area: Vec<Vec<f64>>,
    r_acc: DMatrix<f64>,
    r_acc_log: f64,
    r0: DMatrix<f64>,
    /// Scaled cumulative triangular factor and its log scale at each checkpoint.
    r_hist: Vec<(DMatrix<f64>, f64)>,
    pub steps: usize,
}

impl FrameEvolution {
    pub fn final_point(&self) -> &[f64] {
        self.points.last().unwrap()
    }

    pub fn final_frame(&self) -> &DMatrix<f64> {
        self.frames.last().unwrap()
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Cumulative log growth of the k-volume spanned by the frame.
    pub fn log_volume(&self) -> f64 {
        self.log_growth.last().unwrap().iter().sum()
    }

    /// Reconstructs Dφ_T·V0; only meaningful when the growth fits in f64.
    pub fn transported(&self) -> DMatrix<f64> {
        self.final_frame() * &self.r_acc * &self.r0 * self.r_acc_log.exp()
    }

    /// Upper-triangular factor R with Dφ_T·V0 = Q_T·R·exp(log_scale) (R includes the initial factor).
    pub fn triangular_factor(&self) -> (DMatrix<f64>, f64) {
        (&self.r_acc * &self.r0, self.r_acc_log)
    }

    /// Same as [`Self::triangular_factor`] at checkpoint `i`.
    pub fn triangular_factor_at(&self, i: usize) -> (DMatrix<f64>, f64) {
        let (r, l) = &self.r_hist[i];
        (r * &self.r0, *l)
    }

    /// Dφ_t·V0 at checkpoint `i`.
    pub fn transported_at(&self, i: usize) -> DMatrix<f64> {
        let (r, l) = self.triangular_factor_at(i);
        &self.frames[i] * r * l.exp()
    }
}

/// Transports the columns of `v0` along the orbit of `x0` for time `horizon ≥ 0`.
pub fn tangent_flow(
    model: &VectorFieldModel,
    x0: &[f64],
    v0: &DMatrix<f64>,
    horizon: f64,
    tol: f64,
) -> Result<FrameEvolution> {
    tangent_flow_with(model, x0, v0, horizon, tol, RENORM_INTERVAL)
}

pub fn tangent_flow_with(
    model: &VectorFieldModel,
    x0: &[f64],
    v0: &DMatrix<f64>,
    horizon: f64,
    tol: f64,
    renorm: f64,
) -> Result<FrameEvolution> {
    let (ev, err) = tangent_flow_until(model, x0, v0, horizon, tol, renorm, |_| false)?;
    match err {
        Some(e) => Err(e),
        None => Ok(ev),
    }
}

/// Like [`tangent_flow_with`] but stops after any checkpoint where `stop`
/// returns true. Failures after the first checkpoint are returned next to the
/// partial evolution instead of discarding it.
pub fn tangent_flow_until(
    model: &VectorFieldModel,
    x0: &[f64],
    v0: &DMatrix<f64>,
    horizon: f64,
    tol: f64,
    renorm: f64,
    mut stop: impl FnMut(&FrameEvolution) -> bool,
) -> Result<(FrameEvolution, Option<Error>)> {
    check_tol(tol)?;
    let d = model.dim;
    if x0.len() != d {
        return Err(Error::Input(format!(
            "point has length {} but model dim is {d}",
            x0.len()
        )));
    }
    if v0.nrows() != d || v0.ncols() == 0 || v0.ncols() > d {
        return Err(Error::Input(format!(
            "tangent block must be {d}×k with 1 ≤ k ≤ {d}"
        )));
    }
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::Input(
            "horizon must be finite and non-negative".into(),
        ));
    }
    if !(renorm > 0.0) {
        return Err(Error::Input(
            "renormalization interval must be positive".into(),
        ));
    }
    let k = v0.ncols();
    let (q0, r0) = qr_positive(v0)?;
    let scale = (0..k).map(|c| v0.column(c).norm()).fold(0.0, f64::max);
    if (0..k).any(|i| r0[(i, i)] <= 1e-12 * scale) {
        return Err(Error::Degeneracy(
            "initial tangent block is rank deficient".into(),
        ));
    }
    let prs = pairs(k);
    let c0 = compound2(&r0);
    let c0_norms: Vec<f64> = (0..prs.len()).map(|p| c0.column(p).norm()).collect();
    let mut c_acc = c0.clone();
    let mut c_log = 0.0;

    let mut ev = FrameEvolution {
        model_id: model.id.clone(),
        k,
        times: vec![0.0],
        points: vec![x0.to_vec()],
        frames: vec![q0.clone()],
        log_growth: vec![vec![0.0; k]],
        log_area: vec![vec![0.0; prs.len()]],
        r_acc: DMatrix::identity(k, k),
        r_acc_log: 0.0,
        r0,
        r_hist: vec![(DMatrix::identity(k, k), 0.0)],
        steps: 0,
    };
    let sys = TangentSystem { model, k };
    let mut y = Vec::with_capacity(d * (1 + k));
    y.extend_from_slice(x0);
    y.extend_from_slice(q0.as_slice());
    let mut t = 0.0;
    let mut h_hint = None;
    let mut chunk = 0usize;
    while t < horizon {
        chunk += 1;
        let t_next = (chunk as f64 * renorm).min(horizon);
        let t_next = if horizon - t_next < 1e-12 * renorm {
            horizon
        } else {
            t_next
        };
        let chunk_result = (|| -> Result<(Vec<f64>, f64, usize)> {
            let mut st = Dop853::new(&sys, t, &y, 1.0, StepperOptions::with_tol(tol))?;
            if let Some(h) = h_hint {
                st.set_step(h);
            }
            while st.t() != t_next {
                st.step(t_next)?;
            }
            Ok((st.y().to_vec(), st.step_size(), st.steps))
        })();
        let qr = chunk_result.and_then(|(yn, h, steps)| {
            let v = DMatrix::from_column_slice(d, k, &yn[d..]);
            qr_positive(&v).map(|qr| (yn, h, steps, qr))
        });
        let (yn, h, steps, (q, r)) = match qr {
            Ok(v) => v,
            Err(e) if ev.times.len() > 1 => return Ok((ev, Some(e))),
            Err(e) => return Err(e),
        };
        ev.steps += steps;
        h_hint = Some(h);
        y.copy_from_slice(&yn);
        let mut lg = ev.log_growth.last().unwrap().clone();
        for i in 0..k {
            lg[i] += r[(i, i)].ln();
        }
        ev.r_acc = &r * &ev.r_acc;
        let s = ev.r_acc.amax();
        if s > 0.0 && s.is_finite() {
            ev.r_acc /= s;
            ev.r_acc_log += s.ln();
        }
        if !prs.is_empty() {
            c_acc = compound2(&r) * &c_acc;
            let s = c_acc.amax();
            if s > 0.0 && s.is_finite() {
                c_acc /= s;
                c_log += s.ln();
            }
            let la: Vec<f64> = (0..prs.len())
                .map(|p| c_acc.column(p).norm().ln() + c_log - c0_norms[p].ln())
                .collect();
            ev.log_area.push(la);
        } else {
            ev.log_area.push(Vec::new());
        }
        y[d..].copy_from_slice(q.as_slice());
        ev.log_growth.push(lg);
        ev.frames.push(q);
        ev.points.push(y[..d].to_vec());
        ev.times.push(t_next);
        ev.r_hist.push((ev.r_acc.clone(), ev.r_acc_log));
        t = t_next;
        if stop(&ev) {
            break;
        }
    }
    Ok((ev, None))
}
