use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{check_tol, tangent_flow, Dop853, OdeSystem, StepperOptions};
use crate::linalg::{complement, dist, qr_positive, svd_ascending};
use crate::model::VectorFieldModel;
use crate::rng::{child_seed, seeded, unit_vector};

const CHAOS_STREAM: u64 = 0xc4a0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Future,
    Past,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChaosOptions {
    pub r: f64,
    pub neighborhood: f64,
    pub horizon: f64,
    pub direction: Direction,
    pub seed: u64,
    pub tol: f64,
    /// Random candidates tried after the most and least expanded directions.
    pub n_random: usize,
    /// Time over which candidate directions are estimated.
    pub t_dir: f64,
}

impl Default for ChaosOptions {
    fn default() -> Self {
        ChaosOptions {
            r: 1.0,
            neighborhood: 1e-4,
            horizon: 50.0,
            direction: Direction::Both,
            seed: 0,
            tol: 1e-9,
            n_random: 4,
            t_dir: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointWitness {
    pub point_index: usize,
    /// Time at which the witness reached distance r, per probed direction.
    pub future: Option<f64>,
    pub past: Option<f64>,
    pub witnessed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosReport {
    pub r: f64,
    pub direction: Direction,
    pub n_points: usize,
    pub witness_fraction: f64,
    pub neighborhood: f64,
    pub horizon: f64,
    pub points: Vec<PointWitness>,
}

/// Two copies of the field integrated jointly.
struct PairSystem<'a>(&'a VectorFieldModel);

impl OdeSystem for PairSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.0.dim
    }
    fn rhs(&self, y: &[f64], dy: &mut [f64]) {
        let d = self.0.dim;
        let (a, b) = dy.split_at_mut(d);
        self.0.eval_into(&y[..d], a);
        self.0.eval_into(&y[d..], b);
    }
}

/// First time within the horizon at which the orbits of x and y are at least r apart.
pub fn separation_time(
    model: &VectorFieldModel,
    x: &[f64],
    y: &[f64],
    r: f64,
    horizon: f64,
    tol: f64,
) -> Result<Option<f64>> {
    let d = model.dim;
    if dist(x, y) >= r {
        return Ok(Some(0.0));
    }
    let sys = PairSystem(model);
    let y0: Vec<f64> = x.iter().chain(y).copied().collect();
    let mut st = Dop853::new(&sys, 0.0, &y0, 1.0, StepperOptions::with_tol(tol))?;
    while st.t() < horizon {
        match st.step(horizon) {
            Ok(()) => {}
            Err(Error::Divergence { .. }) | Err(Error::IntegrationFailure { .. }) => {
                return Ok(None)
            }
            Err(e) => return Err(e),
        }
        let s = st.y();
        if dist(&s[..d], &s[d..]) >= r {
            return Ok(Some(st.t()));
        }
    }
    Ok(None)
}

/// Unit directions transverse to the flow, most expanded first, then least expanded.
fn candidate_directions(
    model: &VectorFieldModel,
    x: &[f64],
    t_dir: f64,
    tol: f64,
) -> Vec<Vec<f64>> {
    let d = model.dim;
    let Ok(g) = model.eval_field(x) else {
        return Vec::new();
    };
    let gm = DMatrix::from_column_slice(d, 1, &g);
    let basis = if g.iter().all(|v| *v == 0.0) {
        DMatrix::identity(d, d)
    } else {
        match qr_positive(&gm) {
            Ok((q, _)) => complement(&q),
            Err(_) => DMatrix::identity(d, d),
        }
    };
    let Ok(ev) = tangent_flow(model, x, &basis, t_dir, tol) else {
        return Vec::new();
    };
    let (r, _) = ev.triangular_factor();
    let Ok((_, v)) = svd_ascending(&r) else {
        return Vec::new();
    };
    let k = v.ncols();
    let top = &basis * v.column(k - 1);
    let bottom = &basis * v.column(0);
    vec![top.as_slice().to_vec(), bottom.as_slice().to_vec()]
}

fn witness(
    model: &VectorFieldModel,
    x: &[f64],
    point_seed: u64,
    opts: &ChaosOptions,
) -> Result<Option<f64>> {
    let mut rng = seeded(point_seed);
    let mut dirs = candidate_directions(model, x, opts.t_dir, opts.tol);
    dirs.extend((0..opts.n_random).map(|_| unit_vector(&mut rng, model.dim)));
    for u in dirs {
        let y: Vec<f64> = x
            .iter()
            .zip(&u)
            .map(|(a, b)| a + opts.neighborhood * b)
            .collect();
        if let Some(t) = separation_time(model, x, &y, opts.r, opts.horizon, opts.tol)? {
            return Ok(Some(t));
        }
    }
    Ok(None)
}

/// Fraction of sample points with a neighbour inside the ball that
/// separates to distance r within the horizon (backward time uses −G).
pub fn chaos_probe(
    model: &VectorFieldModel,
    sample: &[Vec<f64>],
    n_points: usize,
    opts: &ChaosOptions,
) -> Result<ChaosReport> {
    if !(opts.r > 0.0) || !(opts.neighborhood > 0.0) {
        return Err(Error::Precondition(
            "r and the neighbourhood radius must be positive".into(),
        ));
    }
    if !(opts.horizon > 0.0) || n_points == 0 || sample.is_empty() {
        return Err(Error::Precondition(
            "need a positive horizon and at least one point".into(),
        ));
    }
    check_tol(opts.tol)?;
    let reversed = model.reversed();
    let rows: Vec<Result<PointWitness>> = (0..n_points)
        .into_par_iter()
        .map(|i| {
            let x = &sample[i * sample.len() / n_points];
            let ps = child_seed(opts.seed, CHAOS_STREAM, i as u64);
            let future = match opts.direction {
                Direction::Future | Direction::Both => witness(model, x, ps, opts)?,
                Direction::Past => None,
            };
            let past = match opts.direction {
                Direction::Past | Direction::Both => witness(&reversed, x, ps, opts)?,
                Direction::Future => None,
            };
            let witnessed = match opts.direction {
                Direction::Future => future.is_some(),
                Direction::Past => past.is_some(),
                Direction::Both => future.is_some() && past.is_some(),
            };
            Ok(PointWitness {
                point_index: i,
                future,
                past,
                witnessed,
            })
        })
        .collect();
    let points = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let hits = points.iter().filter(|p| p.witnessed).count();
    Ok(ChaosReport {
        r: opts.r,
        direction: opts.direction,
        n_points,
        witness_fraction: hits as f64 / n_points as f64,
        neighborhood: opts.neighborhood,
        horizon: opts.horizon,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::attractor_sample;
    use crate::splitting::stable_subspace;

    #[test]
    fn sink_has_no_future_witness() {
        let m = VectorFieldModel::diagonal(&[-1.0, -1.0, -1.0]);
        let s: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![(i as f64).sin(), (i as f64).cos(), 0.5])
            .collect();
        let o = ChaosOptions {
            direction: Direction::Future,
            ..ChaosOptions::default()
        };
        assert_eq!(chaos_probe(&m, &s, 20, &o).unwrap().witness_fraction, 0.0);
    }

    #[test]
    fn lorenz_is_chaotic_both_ways() {
        let m = VectorFieldModel::lorenz_classic();
        let s = attractor_sample(&m, &[1.0, 1.0, 1.0], 30.0, 200, 0.1, 1e-9).unwrap();
        let r = chaos_probe(&m, &s, 10, &ChaosOptions::default()).unwrap();
        assert_eq!(r.witness_fraction, 1.0);
    }

    #[test]
    fn stable_leaf_neighbour_separates_backward() {
        let m = VectorFieldModel::lorenz_classic();
        let s = attractor_sample(&m, &[1.0, 1.0, 1.0], 30.0, 20, 0.37, 1e-9).unwrap();
        let x = &s[5];
        let (e, _) = stable_subspace(&m, x, 1, 2.0, 1e-9).unwrap();
        let y: Vec<f64> = x
            .iter()
            .zip(e.column(0).iter())
            .map(|(a, b)| a + 1e-5 * b)
            .collect();
        let t = separation_time(&m.reversed(), x, &y, 1.0, 50.0, 1e-9)
            .unwrap()
            .unwrap();
        // growth near exp(14.57 t) needs about ln(1e5)/14.57 ≈ 0.79
        assert!(t > 0.4 && t < 2.0, "{t}");
    }

    #[test]
    fn past_probe_is_future_probe_of_reversed_field() {
        let m = VectorFieldModel::lorenz_classic();
        let s = attractor_sample(&m, &[1.0, 1.0, 1.0], 30.0, 100, 0.1, 1e-9).unwrap();
        let past = ChaosOptions {
            direction: Direction::Past,
            seed: 9,
            ..ChaosOptions::default()
        };
        let fut = ChaosOptions {
            direction: Direction::Future,
            ..past.clone()
        };
        let a = chaos_probe(&m, &s, 6, &past).unwrap();
        let b = chaos_probe(&m.reversed(), &s, 6, &fut).unwrap();
        assert_eq!(a.witness_fraction.to_bits(), b.witness_fraction.to_bits());
        for (p, q) in a.points.iter().zip(&b.points) {
            assert_eq!(p.past.map(f64::to_bits), q.future.map(f64::to_bits));
        }
    }

    #[test]
    fn nonpositive_radius_is_rejected() {
        let m = VectorFieldModel::lorenz_classic();
        let o = ChaosOptions {
            r: 0.0,
            ..ChaosOptions::default()
        };
        assert!(matches!(
            chaos_probe(&m, &[vec![1.0; 3]], 1, &o),
            Err(Error::Precondition(_))
        ));
    }
}
