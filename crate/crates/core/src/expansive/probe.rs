use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::warp::{same_orbit_shift, verdict, GridOrbit, MatchResult, Verdict, Warp, WarpSearch};
use crate::error::{Error, Result};
use crate::flow::{check_tol, integrate, Dop853, StepperOptions};
use crate::linalg::{complement, norm, qr_positive};
use crate::model::VectorFieldModel;
use crate::rng::{child_seed, seeded, unit_vector};
use crate::section::LEAF_NOISE_FLOOR;
use crate::splitting::{stable_subspace, DEFAULT_T_EST};

/// Stream id for pair seeds.
const PAIR_STREAM: u64 = 0xe7a5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stratum {
    /// Offset along the estimated stable direction.
    OnLeaf,
    /// Stable direction tilted by a small random component.
    NearLeaf,
    /// Uniformly random direction.
    Generic,
    /// Offset across both the flow and the stable direction, the direction in
    /// which nearby orbits are split between lobes.
    AntipodalLobe,
}

const STRATA: [Stratum; 4] = [
    Stratum::OnLeaf,
    Stratum::NearLeaf,
    Stratum::Generic,
    Stratum::AntipodalLobe,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeOptions {
    pub eps: f64,
    pub delta_grid: Vec<f64>,
    pub n_pairs: usize,
    pub horizon: f64,
    pub positive_only: bool,
    pub seed: u64,
    pub d_s: usize,
    /// Sampling step of the orbits fed to the warp search.
    pub dt: f64,
    /// Warp band in grid steps.
    pub band: usize,
    pub tol: f64,
    pub t_est: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            eps: 0.5,
            delta_grid: vec![0.001, 0.01, 0.05, 0.1],
            n_pairs: 1000,
            horizon: 100.0,
            positive_only: true,
            seed: 0,
            d_s: 1,
            dt: 0.01,
            band: 25,
            tol: 1e-9,
            t_est: DEFAULT_T_EST,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub delta_index: usize,
    pub pair_index: usize,
    /// Seed that regenerates the pair.
    pub seed: u64,
    pub delta: f64,
    pub stratum: Stratum,
    #[serde(flatten)]
    pub evaluation: PairEvaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEvaluation {
    pub forward: MatchResult,
    pub backward: Option<MatchResult>,
    /// y lies on the stable leaf of a point of x's orbit within ε in time.
    pub on_leaf: bool,
    /// An orbit could not be integrated over the whole horizon while the pair was still close.
    pub inconclusive: bool,
    pub counterexample: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSummary {
    pub delta: f64,
    pub pairs: usize,
    pub separated: usize,
    pub stayed_close: usize,
    pub same_orbit_shift: usize,
    pub on_leaf_excluded: usize,
    pub inconclusive: usize,
    pub failures: usize,
    /// Counterexamples found at this δ or carried over from a smaller δ.
    pub counterexamples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansivenessReport {
    pub eps: f64,
    pub delta_grid: Vec<f64>,
    pub delta_star: Option<f64>,
    pub n_pairs: usize,
    pub horizon: f64,
    pub positive_only: bool,
    pub seed: u64,
    pub per_delta: Vec<DeltaSummary>,
    pub counterexamples: Vec<PairOutcome>,
    pub summary: String,
}

impl ExpansivenessReport {
    pub fn passed(&self) -> bool {
        self.counterexamples.is_empty()
    }
}

/// Orbit samples on the grid k·dt, produced on demand.
struct LazyGrid<'a> {
    st: Option<Dop853<'a, VectorFieldModel>>,
    dt: f64,
    n: usize,
    points: Vec<Vec<f64>>,
    failed: bool,
}

impl<'a> LazyGrid<'a> {
    fn new(model: &'a VectorFieldModel, x0: &[f64], dt: f64, n: usize, tol: f64) -> Self {
        let st = Dop853::new(model, 0.0, x0, 1.0, StepperOptions::with_tol(tol)).ok();
        let failed = st.is_none();
        LazyGrid {
            st,
            dt,
            n,
            points: vec![x0.to_vec()],
            failed,
        }
    }

    fn ensure(&mut self, k: usize) -> bool {
        let t_end = self.dt * (self.n - 1) as f64;
        while self.points.len() <= k && !self.failed {
            let idx = self.points.len();
            let tk = if idx == self.n - 1 {
                t_end
            } else {
                self.dt * idx as f64
            };
            let st = self.st.as_mut().unwrap();
            while st.t() < tk {
                if st.step(t_end).is_err() {
                    self.failed = true;
                    return false;
                }
            }
            let mut buf = vec![0.0; self.points[0].len()];
            st.interpolate(tk, &mut buf);
            self.points.push(buf);
        }
        self.points.len() > k
    }
}

struct Streamed {
    sup: f64,
    identity_sup: f64,
    warp: Warp,
    compared: usize,
    complete: bool,
    truncated: bool,
}

/// Integrates both orbits while extending the warp search, stopping as soon
/// as every admissible warp exceeds `delta`.
fn stream_match(
    model: &VectorFieldModel,
    x: &[f64],
    y: &[f64],
    delta: f64,
    opts: &ProbeOptions,
) -> Streamed {
    let n = (opts.horizon / opts.dt).round() as usize + 1;
    let mut gx = LazyGrid::new(model, x, opts.dt, n, opts.tol);
    let mut gy = LazyGrid::new(model, y, opts.dt, n, opts.tol);
    let mut search = WarpSearch::new(opts.band, n);
    let mut lower = 0.0f64;
    for i in 0..n {
        if !gx.ensure(i) || !gy.ensure(search.y_needed()) {
            return Streamed {
                sup: lower,
                identity_sup: search.identity_sup(),
                warp: Warp::default(),
                compared: i,
                complete: false,
                truncated: true,
            };
        }
        let m = search.push(&gx.points[i], &gy.points);
        lower = lower.max(m);
        if m > delta && i + 1 < n {
            return Streamed {
                sup: lower,
                identity_sup: search.identity_sup(),
                warp: Warp::default(),
                compared: i + 1,
                complete: false,
                truncated: false,
            };
        }
    }
    let (sup, warp) = search.finish().unwrap_or((lower, Warp::default()));
    Streamed {
        sup,
        identity_sup: search.identity_sup(),
        warp,
        compared: n,
        complete: true,
        truncated: false,
    }
}

fn short_orbit(model: &VectorFieldModel, x: &[f64], opts: &ProbeOptions) -> Result<GridOrbit> {
    let tr = integrate(model, x, (0.0, opts.eps), opts.tol)?;
    let k = (opts.eps / opts.dt).floor() as usize;
    let mut points = Vec::with_capacity(k + 1);
    for i in 0..=k {
        points.push(tr.flow_at((i as f64 * opts.dt).min(opts.eps))?);
    }
    Ok(GridOrbit {
        dt: opts.dt,
        points,
        dense: Some(tr),
    })
}

/// Tolerance for "lies on the other orbit", matched to the integrator's mixed error control.
fn shift_tolerance(x: &[f64], tol: f64) -> f64 {
    10.0 * tol * (1.0 + norm(x))
}

fn matched(
    x: &[f64],
    y: &[f64],
    s: &Streamed,
    shift: Option<f64>,
    delta: f64,
    opts: &ProbeOptions,
) -> MatchResult {
    MatchResult {
        x: x.to_vec(),
        y: y.to_vec(),
        dt: opts.dt,
        warp: s.warp.clone(),
        sup_distance: s.sup,
        identity_sup: s.identity_sup,
        verdict: verdict(shift, s.sup, delta),
        shift,
        eps: opts.eps,
        delta,
        compared: s.compared,
        complete: s.complete,
    }
}

/// True when y − x lies in the span of the stable directions and the flow
/// direction at x, with flow component at most ε in time.
pub fn on_stable_leaf(
    model: &VectorFieldModel,
    x: &[f64],
    y: &[f64],
    d_s: usize,
    eps: f64,
    t_est: f64,
    tol: f64,
) -> Result<bool> {
    let d = model.dim;
    let (e_s, _) = stable_subspace(model, x, d_s, t_est, tol)?;
    let g = model.eval_field(x)?;
    let mut b = DMatrix::zeros(d, d_s + 1);
    b.view_mut((0, 0), (d, d_s)).copy_from(&e_s);
    b.set_column(d_s, &DVector::from_column_slice(&g));
    let v = DVector::from_iterator(d, y.iter().zip(x).map(|(a, c)| a - c));
    let svd = b.clone().svd(true, true);
    let c = svd.solve(&v, 1e-14).map_err(|e| Error::Numeric(e.into()))?;
    let resid = (&b * &c - &v).norm();
    Ok(resid < 10.0 * LEAF_NOISE_FLOOR && c[d_s].abs() <= eps)
}

fn draw_pair(
    model: &VectorFieldModel,
    sample: &[Vec<f64>],
    opts: &ProbeOptions,
    delta_index: usize,
    pair_index: usize,
) -> Result<(u64, Stratum, Vec<f64>, Vec<f64>)> {
    let seed = child_seed(
        opts.seed ^ PAIR_STREAM,
        delta_index as u64,
        pair_index as u64,
    );
    let mut rng = seeded(seed);
    let delta = opts.delta_grid[delta_index];
    let x = sample[rng.random_range(0..sample.len())].clone();
    let r = delta * rng.random_range(0.1..=1.0);
    let stratum = STRATA[pair_index % STRATA.len()];
    let d = model.dim;
    let w = unit_vector(&mut rng, d);
    let dir: Vec<f64> = match stratum {
        Stratum::Generic => w,
        _ => {
            let (e_s, _) = stable_subspace(model, &x, opts.d_s, opts.t_est, opts.tol)?;
            let coef = unit_vector(&mut rng, opts.d_s);
            let s = &e_s * DVector::from_vec(coef);
            match stratum {
                Stratum::OnLeaf => s.as_slice().to_vec(),
                Stratum::NearLeaf => {
                    let v: Vec<f64> = s.iter().zip(&w).map(|(a, b)| a + 0.01 * b).collect();
                    let nv = norm(&v);
                    v.iter().map(|a| a / nv).collect()
                }
                _ => {
                    let g = model.eval_field(&x)?;
                    let mut b = DMatrix::zeros(d, opts.d_s + 1);
                    b.view_mut((0, 0), (d, opts.d_s)).copy_from(&e_s);
                    b.set_column(opts.d_s, &DVector::from_column_slice(&g));
                    let (q, _) = qr_positive(&b)?;
                    let c = complement(&q);
                    let k = c.ncols();
                    let mix = DVector::from_vec(unit_vector(&mut rng, k));
                    (c * mix).as_slice().to_vec()
                }
            }
        }
    };
    let y = x.iter().zip(&dir).map(|(a, b)| a + r * b).collect();
    Ok((seed, stratum, x, y))
}

/// Generates pair (`delta_index`, `pair_index`) from the probe seed and evaluates it.
pub fn replay_pair(
    model: &VectorFieldModel,
    sample: &[Vec<f64>],
    opts: &ProbeOptions,
    delta_index: usize,
    pair_index: usize,
) -> Result<PairOutcome> {
    let (seed, stratum, x, y) = draw_pair(model, sample, opts, delta_index, pair_index)?;
    let delta = opts.delta_grid[delta_index];
    let evaluation = evaluate_pair(model, &x, &y, delta, opts)?;
    Ok(PairOutcome {
        delta_index,
        pair_index,
        seed,
        delta,
        stratum,
        evaluation,
    })
}

/// Matches the orbits of x and y over the horizon (both time directions
/// unless forward only) and decides whether the pair is a counterexample.
pub fn evaluate_pair(
    model: &VectorFieldModel,
    x: &[f64],
    y: &[f64],
    delta: f64,
    opts: &ProbeOptions,
) -> Result<PairEvaluation> {
    let shift = same_orbit_shift(
        &short_orbit(model, x, opts)?,
        &short_orbit(model, y, opts)?,
        opts.eps,
        shift_tolerance(x, opts.tol),
    );
    let fwd = stream_match(model, x, y, delta, opts);
    let forward = matched(x, y, &fwd, shift, delta, opts);
    let mut inconclusive = fwd.truncated && fwd.sup <= delta;
    let mut close = forward.verdict == Verdict::StayedClose;
    let mut backward = None;
    if close && !opts.positive_only {
        let rev = model.reversed();
        let bwd = stream_match(&rev, x, y, delta, opts);
        inconclusive |= bwd.truncated && bwd.sup <= delta;
        let b = matched(x, y, &bwd, shift, delta, opts);
        close = b.verdict == Verdict::StayedClose;
        backward = Some(b);
    }
    let on_leaf = close
        && opts.positive_only
        && on_stable_leaf(model, x, y, opts.d_s, opts.eps, opts.t_est, opts.tol)?;
    Ok(PairEvaluation {
        forward,
        backward,
        on_leaf,
        inconclusive,
        counterexample: close && !on_leaf && !inconclusive,
    })
}

/// Searches for pairs of δ-close orbits that stay δ-close under the best
/// monotone time warp without being time shifts of one orbit.
pub fn expansiveness_probe(
    model: &VectorFieldModel,
    sample: &[Vec<f64>],
    opts: &ProbeOptions,
) -> Result<ExpansivenessReport> {
    if !(opts.eps > 0.0) {
        return Err(Error::Precondition("ε must be positive".into()));
    }
    if opts.delta_grid.is_empty()
        || opts.delta_grid.iter().any(|d| !(*d > 0.0))
        || opts.delta_grid.windows(2).any(|w| !(w[0] < w[1]))
    {
        return Err(Error::Precondition(
            "δ grid must be positive and strictly ascending".into(),
        ));
    }
    if !(opts.horizon >= 50.0) {
        return Err(Error::Precondition("horizon must be at least 50".into()));
    }
    if !(opts.dt > 0.0) || opts.band < 1 {
        return Err(Error::Input(
            "grid spacing and band must be positive".into(),
        ));
    }
    check_tol(opts.tol)?;
    if sample.is_empty() || sample.iter().any(|p| p.len() != model.dim) {
        return Err(Error::Input(
            "sample points must match the model dimension".into(),
        ));
    }
    let mut per_delta = Vec::new();
    let mut counterexamples: Vec<PairOutcome> = Vec::new();
    for (di, &delta) in opts.delta_grid.iter().enumerate() {
        let outcomes: Vec<Result<PairOutcome>> = (0..opts.n_pairs)
            .into_par_iter()
            .map(|k| replay_pair(model, sample, opts, di, k))
            .collect();
        let mut s = DeltaSummary {
            delta,
            pairs: opts.n_pairs,
            separated: 0,
            stayed_close: 0,
            same_orbit_shift: 0,
            on_leaf_excluded: 0,
            inconclusive: 0,
            failures: 0,
            counterexamples: 0,
        };
        // a pair that stayed within a smaller δ also stays within this one
        let carried = counterexamples
            .iter()
            .filter(|c| c.evaluation.forward.sup_distance <= delta)
            .count();
        for o in outcomes {
            match o {
                Ok(o) => {
                    let e = &o.evaluation;
                    match e.forward.verdict {
                        Verdict::Separated => s.separated += 1,
                        Verdict::StayedClose => s.stayed_close += 1,
                        Verdict::SameOrbitShift => s.same_orbit_shift += 1,
                    }
                    s.on_leaf_excluded += e.on_leaf as usize;
                    s.inconclusive += e.inconclusive as usize;
                    if e.counterexample {
                        counterexamples.push(o);
                    }
                }
                Err(e) if e.is_numeric() => s.failures += 1,
                Err(e) => return Err(e),
            }
        }
        s.counterexamples = counterexamples
            .iter()
            .filter(|c| c.delta_index == di)
            .count()
            + carried;
        per_delta.push(s);
    }
    let delta_star = per_delta
        .iter()
        .take_while(|s| s.counterexamples == 0)
        .last()
        .map(|s| s.delta);
    let summary = match delta_star {
        Some(d) => format!(
            "no counterexample found at (ε = {}, δ = {}, N = {})",
            opts.eps, d, opts.n_pairs
        ),
        None => "no tested δ certifies expansiveness".to_string(),
    };
    Ok(ExpansivenessReport {
        eps: opts.eps,
        delta_grid: opts.delta_grid.clone(),
        delta_star,
        n_pairs: opts.n_pairs,
        horizon: opts.horizon,
        positive_only: opts.positive_only,
        seed: opts.seed,
        per_delta,
        counterexamples,
        summary,
    })
}
