use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dop853::{Dop853, StepperOptions};
use crate::error::{Error, Result};
use crate::model::VectorFieldModel;
use crate::rng::{child_seed, seeded, unit_vector};

/// Candidate trapping region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Region {
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// `Σ w_i (x_i − c_i)² ≤ radius²`.
    Ellipsoid {
        center: Vec<f64>,
        weights: Vec<f64>,
        radius: f64,
    },
}

impl Region {
    pub fn dim(&self) -> usize {
        match self {
            Region::Box { lo, .. } => lo.len(),
            Region::Ellipsoid { center, .. } => center.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Region::Box { lo, hi } => {
                if lo.len() != hi.len() || lo.is_empty() || lo.iter().zip(hi).any(|(a, b)| !(a < b))
                {
                    return Err(Error::Input("box needs lo < hi in every coordinate".into()));
                }
            }
            Region::Ellipsoid {
                center,
                weights,
                radius,
            } => {
                if center.len() != weights.len()
                    || center.is_empty()
                    || weights.iter().any(|w| !(*w > 0.0) || !w.is_finite())
                    || !(*radius > 0.0)
                {
                    return Err(Error::Input(
                        "ellipsoid needs positive weights and radius".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// ≤ 1 inside, 1 on the boundary.
    pub fn level(&self, x: &[f64]) -> f64 {
        match self {
            Region::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (a, b))| {
                    let c = 0.5 * (a + b);
                    let r = 0.5 * (b - a);
                    (v - c).abs() / r
                })
                .fold(0.0, f64::max),
            Region::Ellipsoid {
                center,
                weights,
                radius,
            } => {
                let s: f64 = x
                    .iter()
                    .zip(center)
                    .zip(weights)
                    .map(|((v, c), w)| w * (v - c).powi(2))
                    .sum();
                s / radius.powi(2)
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.level(x) <= 1.0
    }

    /// Random boundary point with its outward unit normal.
    pub fn sample_boundary<R: Rng>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        match self {
            Region::Box { lo, hi } => {
                let d = lo.len();
                // pick a face with probability proportional to its area
                let widths: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| b - a).collect();
                let areas: Vec<f64> = (0..d)
                    .map(|i| {
                        (0..d)
                            .filter(|&j| j != i)
                            .map(|j| widths[j])
                            .product::<f64>()
                    })
                    .collect();
                let total: f64 = areas.iter().sum::<f64>() * 2.0;
                let mut u = rng.random::<f64>() * total;
                let mut face = (0, false);
                'outer: for i in 0..d {
                    for side in [false, true] {
                        if u < areas[i] || (i == d - 1 && side) {
                            face = (i, side);
                            break 'outer;
                        }
                        u -= areas[i];
                    }
                }
                let mut x: Vec<f64> = (0..d)
                    .map(|j| lo[j] + widths[j] * rng.random::<f64>())
                    .collect();
                let mut n = vec![0.0; d];
                if face.1 {
                    x[face.0] = hi[face.0];
                    n[face.0] = 1.0;
                } else {
                    x[face.0] = lo[face.0];
                    n[face.0] = -1.0;
                }
                (x, n)
            }
            Region::Ellipsoid {
                center,
                weights,
                radius,
            } => {
                let d = center.len();
                let u = unit_vector(rng, d);
                let x: Vec<f64> = (0..d)
                    .map(|i| center[i] + radius * u[i] / weights[i].sqrt())
                    .collect();
                let g: Vec<f64> = (0..d).map(|i| weights[i] * (x[i] - center[i])).collect();
                let gn = crate::linalg::norm(&g);
                (x, g.iter().map(|v| v / gn).collect())
            }
        }
    }

    pub fn sample_interior<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Region::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(a, b)| a + (b - a) * rng.random::<f64>())
                .collect(),
            Region::Ellipsoid {
                center,
                weights,
                radius,
            } => {
                let d = center.len();
                let u = unit_vector(rng, d);
                let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
                (0..d)
                    .map(|i| center[i] + r * u[i] / weights[i].sqrt())
                    .collect()
            }
        }
    }

    pub fn with_radius(&self, r: f64) -> Region {
        match self {
            Region::Ellipsoid {
                center, weights, ..
            } => Region::Ellipsoid {
                center: center.clone(),
                weights: weights.clone(),
                radius: r,
            },
            other => other.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrapOptions {
    pub seed: u64,
    pub tol: f64,
    /// Interior samples integrated over the horizon.
    pub n_interior: usize,
}

impl Default for TrapOptions {
    fn default() -> Self {
        TrapOptions {
            seed: 0,
            tol: 1e-9,
            n_interior: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapViolation {
    pub point: Vec<f64>,
    /// Boundary samples: ⟨G, outward normal⟩ (≥ 0 violates). Interior samples:
    /// level-set excess of the escaping orbit.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapReport {
    pub passed: bool,
    pub violations: Vec<TrapViolation>,
    #[serde(rename = "minimal_R", skip_serializing_if = "Option::is_none")]
    pub minimal_r: Option<f64>,
    pub boundary_samples: usize,
    pub interior_samples: usize,
}

fn boundary_violations(
    model: &VectorFieldModel,
    region: &Region,
    n: usize,
    seed: u64,
) -> Vec<TrapViolation> {
    let mut rng = seeded(child_seed(seed, 0x7a11, 0));
    let mut g = vec![0.0; model.dim];
    let mut out = Vec::new();
    for _ in 0..n {
        let (x, nrm) = region.sample_boundary(&mut rng);
        model.eval_into(&x, &mut g);
        let v = crate::linalg::dot(&g, &nrm);
        if !(v < 0.0) {
            out.push(TrapViolation { point: x, value: v });
        }
    }
    out
}

/// Checks inward flux on sampled boundary points and containment of
/// sampled interior orbits over `[0, horizon]`.
pub fn trap_check(
    model: &VectorFieldModel,
    region: &Region,
    n_boundary: usize,
    horizon: f64,
    opts: &TrapOptions,
) -> Result<TrapReport> {
    region.validate()?;
    if region.dim() != model.dim {
        return Err(Error::Input("region dimension does not match model".into()));
    }
    super::check_tol(opts.tol)?;
    let mut violations = boundary_violations(model, region, n_boundary, opts.seed);
    let n_int = if horizon > 0.0 { opts.n_interior } else { 0 };
    let mut rng = seeded(child_seed(opts.seed, 0x7a11, 1));
    for _ in 0..n_int {
        let x0 = region.sample_interior(&mut rng);
        let worst = escape_level(model, region, &x0, horizon, opts.tol);
        if worst > 1.0 + 1e-12 {
            violations.push(TrapViolation {
                point: x0,
                value: (worst - 1.0).min(f64::MAX),
            });
        }
    }
    Ok(TrapReport {
        passed: violations.is_empty(),
        violations,
        minimal_r: None,
        boundary_samples: n_boundary,
        interior_samples: n_int,
    })
}

fn escape_level(
    model: &VectorFieldModel,
    region: &Region,
    x0: &[f64],
    horizon: f64,
    tol: f64,
) -> f64 {
    let mut worst = region.level(x0);
    let Ok(mut st) = Dop853::new(model, 0.0, x0, 1.0, StepperOptions::with_tol(tol)) else {
        return f64::MAX;
    };
    while st.t() < horizon {
        if st.step(horizon).is_err() {
            return f64::MAX;
        }
        worst = worst.max(region.level(st.y()));
        if worst > 1.0 + 1e-12 {
            break;
        }
    }
    worst
}

/// Smallest ellipsoid radius in `[r_lo, r_hi]` (to relative accuracy `rel_tol`)
/// whose sampled boundary has inward flux everywhere.
pub fn minimal_trapping_radius(
    model: &VectorFieldModel,
    region: &Region,
    n_boundary: usize,
    r_lo: f64,
    r_hi: f64,
    rel_tol: f64,
    seed: u64,
) -> Result<f64> {
    if !matches!(region, Region::Ellipsoid { .. }) {
        return Err(Error::Input("radius search needs an ellipsoid".into()));
    }
    if !(0.0 < r_lo && r_lo < r_hi) {
        return Err(Error::Input("need 0 < r_lo < r_hi".into()));
    }
    let ok =
        |r: f64| boundary_violations(model, &region.with_radius(r), n_boundary, seed).is_empty();
    if !ok(r_hi) {
        return Err(Error::Precondition(format!("radius {r_hi} does not trap")));
    }
    if ok(r_lo) {
        return Ok(r_lo);
    }
    let (mut lo, mut hi) = (r_lo, r_hi);
    while hi - lo > rel_tol * hi {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk() -> Region {
        Region::Ellipsoid {
            center: vec![0.0, 0.0],
            weights: vec![1.0, 1.0],
            radius: 1.0,
        }
    }

    #[test]
    fn contracting_disk_traps() {
        let m = VectorFieldModel::diagonal(&[-1.0, -1.0]);
        let r = trap_check(&m, &disk(), 200, 5.0, &TrapOptions::default()).unwrap();
        assert!(r.passed);
        assert_eq!(r.violations.len(), 0);
    }

    #[test]
    fn expanding_disk_violates_everywhere() {
        let m = VectorFieldModel::diagonal(&[1.0, 1.0]);
        let r = trap_check(&m, &disk(), 200, 0.0, &TrapOptions::default()).unwrap();
        assert!(!r.passed);
        assert_eq!(r.violations.len(), 200);
    }

    #[test]
    fn box_boundary_samples_lie_on_faces() {
        let reg = Region::Box {
            lo: vec![-1.0, 0.0, 2.0],
            hi: vec![1.0, 3.0, 4.0],
        };
        let mut rng = seeded(5);
        for _ in 0..100 {
            let (x, n) = reg.sample_boundary(&mut rng);
            assert!((reg.level(&x) - 1.0).abs() < 1e-12);
            assert!((crate::linalg::norm(&n) - 1.0).abs() < 1e-12);
        }
        let m = VectorFieldModel::diagonal(&[-1.0, -1.0, -1.0]);
        let lin = Region::Box {
            lo: vec![-1.0; 3],
            hi: vec![1.0; 3],
        };
        assert!(
            trap_check(&m, &lin, 100, 2.0, &TrapOptions::default())
                .unwrap()
                .passed
        );
    }

    #[test]
    fn degenerate_region_rejected() {
        let m = VectorFieldModel::diagonal(&[-1.0, -1.0]);
        let reg = Region::Box {
            lo: vec![0.0, 0.0],
            hi: vec![0.0, 1.0],
        };
        assert!(trap_check(&m, &reg, 10, 1.0, &TrapOptions::default()).is_err());
    }
}
