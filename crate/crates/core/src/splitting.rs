//! Finite-time estimates of the stable / center-unstable splitting and the
//! checks built on them: cone invariance, domination, sectional expansion
//! and Lyapunov spectra.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{sample_grid, tangent_flow_until, tangent_flow_with, RENORM_INTERVAL};
use crate::linalg::{angle_to_subspace, linear_fit, qr_positive, svd_ascending, top_eigenvectors};
use crate::model::VectorFieldModel;
use crate::rng::{child_seed, normal, seeded};

/// Below this singular-value ratio a splitting estimate is flagged.
pub const LOW_CONFIDENCE_GAP: f64 = 1.05;
pub const DEFAULT_T_EST: f64 = 2.0;

#[derive(Debug, Clone, Copy)]
pub struct SplittingOptions {
    pub tol: f64,
    /// Backward integration for the center-unstable estimate stops once its
    /// gap exceeds this ratio.
    pub cu_gap_stop: f64,
}

impl Default for SplittingOptions {
    fn default() -> Self {
        SplittingOptions {
            tol: 1e-9,
            cu_gap_stop: 1e8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SplittingEstimate {
    pub base_point: Vec<f64>,
    pub d_s: usize,
    /// d×d_s, orthonormal columns.
    pub e_s: DMatrix<f64>,
    /// d×d_cu, orthonormal columns; the first column is the flow direction at regular points.
    pub e_cu: DMatrix<f64>,
    pub t_est: f64,
    /// σ_{d_s+1}/σ_{d_s} of Dφ_{T_est}(x).
    pub gap: f64,
    /// Backward window actually used for the center-unstable estimate.
    pub cu_window: f64,
    /// Matching ratio for the backward estimate.
    pub cu_gap: f64,
    pub low_confidence: bool,
    /// Angle between G(x) and the unrotated center-unstable estimate.
    pub flow_angle: Option<f64>,
}

impl SplittingEstimate {
    pub fn d_cu(&self) -> usize {
        self.e_cu.ncols()
    }

    /// Components (stable, center-unstable) of `w` in the oblique splitting.
    pub fn decompose(&self, w: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let b = self.basis();
        let c = b.lu().solve(w).ok_or_else(|| {
            Error::Degeneracy("stable and center-unstable estimates are not transverse".into())
        })?;
        let ds = self.d_s;
        Ok((
            c.rows(0, ds).into_owned(),
            c.rows(ds, c.len() - ds).into_owned(),
        ))
    }

    pub fn basis(&self) -> DMatrix<f64> {
        let d = self.e_s.nrows();
        let mut b = DMatrix::zeros(d, d);
        b.columns_mut(0, self.d_s).copy_from(&self.e_s);
        b.columns_mut(self.d_s, d - self.d_s).copy_from(&self.e_cu);
        b
    }
}

fn check_ds(d: usize, d_s: usize, min_cu: usize) -> Result<()> {
    if d_s < 1 || d_s + min_cu > d {
        return Err(Error::Precondition(format!(
            "need 1 ≤ d_s ≤ d − {min_cu}, got d_s = {d_s}, d = {d}"
        )));
    }
    Ok(())
}

/// log of singular values (ascending) of R·exp(scale), with the smallest one
/// recovered from the determinant when it is the only small one.
fn log_singular(r: &DMatrix<f64>, scale: f64, small: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (s, v) = svd_ascending(r)?;
    let mut ls: Vec<f64> = s.iter().map(|x| x.ln() + scale).collect();
    if small == 1 && ls.len() > 1 {
        let logdet: f64 = (0..r.nrows()).map(|i| r[(i, i)].abs().ln() + scale).sum();
        ls[0] = logdet - ls[1..].iter().sum::<f64>();
    }
    Ok((ls, v))
}

/// The d_s most contracted right singular directions of Dφ_T(x) and the
/// ratio σ_{d_s+1}/σ_{d_s}.
pub fn stable_subspace(
    model: &VectorFieldModel,
    x: &[f64],
    d_s: usize,
    t_est: f64,
    tol: f64,
) -> Result<(DMatrix<f64>, f64)> {
    let d = model.dim;
    check_ds(d, d_s, 1)?;
    if !(t_est > 0.0) {
        return Err(Error::Precondition(
            "estimation window must be positive".into(),
        ));
    }
    let fwd = tangent_flow_with(
        model,
        x,
        &DMatrix::identity(d, d),
        t_est,
        tol,
        RENORM_INTERVAL,
    )?;
    let (r, l) = fwd.triangular_factor();
    let (ls, v) = log_singular(&r, l, d_s)?;
    Ok((
        v.columns(0, d_s).into_owned(),
        (ls[d_s] - ls[d_s - 1]).exp(),
    ))
}

pub fn finite_time_splitting(
    model: &VectorFieldModel,
    x: &[f64],
    d_s: usize,
    t_est: f64,
) -> Result<SplittingEstimate> {
    finite_time_splitting_with(model, x, d_s, t_est, &SplittingOptions::default())
}

/// Stable directions: the d_s most contracted right singular vectors of
/// Dφ_T(x). Center-unstable directions: the d_cu most contracted right
/// singular vectors of Dφ_{−T}(x), integrated until converged.
pub fn finite_time_splitting_with(
    model: &VectorFieldModel,
    x: &[f64],
    d_s: usize,
    t_est: f64,
    opts: &SplittingOptions,
) -> Result<SplittingEstimate> {
    let d = model.dim;
    check_ds(d, d_s, 1)?;
    if !(t_est > 0.0) {
        return Err(Error::Precondition(
            "estimation window must be positive".into(),
        ));
    }
    let d_cu = d - d_s;
    let eye = DMatrix::identity(d, d);
    let (e_s, gap) = stable_subspace(model, x, d_s, t_est, opts.tol)?;

    let rev = model.reversed();
    let cu_ratio = |ev: &crate::flow::FrameEvolution| -> f64 {
        let (r, l) = ev.triangular_factor();
        match log_singular(&r, l, d_cu) {
            Ok((ls, _)) => (ls[d_cu] - ls[d_cu - 1]).exp(),
            Err(_) => f64::NAN,
        }
    };
    let stop = opts.cu_gap_stop;
    let (bwd, _partial) =
        tangent_flow_until(&rev, x, &eye, t_est, opts.tol, RENORM_INTERVAL, |ev| {
            cu_ratio(ev) > stop
        })?;
    let (rb, lb) = bwd.triangular_factor();
    let (lsb, vb) = log_singular(&rb, lb, d_cu)?;
    let mut e_cu = vb.columns(0, d_cu).into_owned();
    let cu_gap = (lsb[d_cu] - lsb[d_cu - 1]).exp();
    let cu_window = bwd.final_time();

    let g = DVector::from_vec(model.eval_field(x)?);
    let gn = g.norm();
    let mut flow_angle = None;
    if gn > 1e-8 {
        let gh = &g / gn;
        flow_angle = Some(angle_to_subspace(&gh, &e_cu));
        let mut cols = DMatrix::zeros(d, d_cu);
        cols.set_column(0, &gh);
        if d_cu > 1 {
            let p = &e_cu * e_cu.transpose() - &gh * gh.transpose();
            let rest = top_eigenvectors(&p, d_cu - 1);
            cols.columns_mut(1, d_cu - 1).copy_from(&rest);
        }
        e_cu = qr_positive(&cols)?.0;
    }
    Ok(SplittingEstimate {
        base_point: x.to_vec(),
        d_s,
        e_s,
        e_cu,
        t_est,
        gap,
        cu_window,
        cu_gap,
        low_confidence: !(gap >= LOW_CONFIDENCE_GAP) || !(cu_gap >= LOW_CONFIDENCE_GAP),
        flow_angle,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointDiagnostic {
    pub point_index: usize,
    pub margin: f64,
    pub pass: bool,
    /// Check-specific value: worst cone ratio, or fitted slope.
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PointDiagnostic {
    fn failed(point_index: usize, e: &Error) -> Self {
        PointDiagnostic {
            point_index,
            margin: f64::MIN,
            pass: false,
            value: f64::NAN,
            error: Some(e.to_string()),
        }
    }
}

/// Per-point rows with header `point_index,margin,pass`.
pub fn diagnostics_csv(points: &[PointDiagnostic]) -> String {
    let mut s = String::from("point_index,margin,pass\n");
    for p in points {
        s.push_str(&format!("{},{:.17e},{}\n", p.point_index, p.margin, p.pass));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(rename = "T")]
    pub t: f64,
    pub d_s: usize,
}

fn pass_fraction(points: &[PointDiagnostic]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    points.iter().filter(|p| p.pass).count() as f64 / points.len() as f64
}

fn worst_margin(points: &[PointDiagnostic]) -> f64 {
    points
        .iter()
        .map(|p| p.margin)
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeReport {
    pub sampled_points: usize,
    pub params: CheckParams,
    pub pass_fraction: f64,
    pub worst_margin: f64,
    pub points: Vec<PointDiagnostic>,
    pub t_est: f64,
    pub low_confidence_points: usize,
}

impl ConeReport {
    /// Re-evaluates the verdicts for a wider aperture on the same image set.
    pub fn passes_at(&self, a: f64) -> Vec<bool> {
        self.points
            .iter()
            .map(|p| p.error.is_none() && p.value <= a * (1.0 + 1e-12))
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConeOptions {
    pub t_est: f64,
    pub samples: usize,
    pub seed: u64,
    pub splitting: SplittingOptions,
}

impl Default for ConeOptions {
    fn default() -> Self {
        ConeOptions {
            t_est: DEFAULT_T_EST,
            samples: 50,
            seed: 0,
            splitting: SplittingOptions::default(),
        }
    }
}

/// Worst image ratio ‖w_s‖/‖w_cu‖ over sampled boundary vectors of the cone
/// of aperture `a` at `x`, pushed forward for time `t`.
fn cone_point(
    model: &VectorFieldModel,
    x: &[f64],
    d_s: usize,
    a: f64,
    t: f64,
    opts: &ConeOptions,
    index: usize,
) -> Result<(f64, bool)> {
    let d = model.dim;
    let sx = finite_time_splitting_with(model, x, d_s, opts.t_est, &opts.splitting)?;
    let (m, sy) = if t > 0.0 {
        let ev = tangent_flow_with(
            model,
            x,
            &DMatrix::identity(d, d),
            t,
            opts.splitting.tol,
            RENORM_INTERVAL,
        )?;
        let sy =
            finite_time_splitting_with(model, ev.final_point(), d_s, opts.t_est, &opts.splitting)?;
        (ev.transported(), sy)
    } else {
        (DMatrix::identity(d, d), sx.clone())
    };
    let mut rng = seeded(child_seed(opts.seed, 0xc0e, index as u64));
    let d_cu = d - d_s;
    let mut worst: f64 = 0.0;
    for _ in 0..opts.samples {
        let s = unit(&mut rng, d_s);
        let c = unit(&mut rng, d_cu);
        let v = &sx.e_s * s * a + &sx.e_cu * c;
        let v = &v / v.norm();
        let w = &m * v;
        let (ws, wc) = sy.decompose(&w)?;
        let ratio = ws.norm() / wc.norm();
        if !ratio.is_finite() {
            return Err(Error::Numeric("image left the center-unstable cone".into()));
        }
        worst = worst.max(ratio);
    }
    Ok((worst, sx.low_confidence || sy.low_confidence))
}

fn unit<R: rand::Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_vec(crate::rng::unit_vector(rng, n))
}

/// Checks Dφ_T(cone_x(a)) ⊂ cone_{φ_T x}(a) on sampled boundary vectors.
pub fn cone_invariance(
    model: &VectorFieldModel,
    points: &[Vec<f64>],
    d_s: usize,
    a: f64,
    t: f64,
    opts: &ConeOptions,
) -> Result<ConeReport> {
    check_ds(model.dim, d_s, 1)?;
    if !(a > 0.0) {
        return Err(Error::Precondition("cone aperture must be positive".into()));
    }
    if !(t >= 0.0) {
        return Err(Error::Precondition(
            "push-forward time must be non-negative".into(),
        ));
    }
    let res: Vec<(PointDiagnostic, bool)> = points
        .par_iter()
        .enumerate()
        .map(|(i, x)| match cone_point(model, x, d_s, a, t, opts, i) {
            Ok((ratio, low)) => {
                let pass = ratio <= a * (1.0 + 1e-12);
                (
                    PointDiagnostic {
                        point_index: i,
                        margin: a - ratio,
                        pass,
                        value: ratio,
                        error: None,
                    },
                    low,
                )
            }
            Err(e) => (PointDiagnostic::failed(i, &e), false),
        })
        .collect();
    let low = res.iter().filter(|r| r.1).count();
    let diags: Vec<PointDiagnostic> = res.into_iter().map(|r| r.0).collect();
    Ok(ConeReport {
        sampled_points: points.len(),
        params: CheckParams { a: Some(a), t, d_s },
        pass_fraction: pass_fraction(&diags),
        worst_margin: worst_margin(&diags),
        points: diags,
        t_est: opts.t_est,
        low_confidence_points: low,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeGridEntry {
    pub a: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub pass_fraction: f64,
    pub worst_margin: f64,
}

/// Cone invariance over a grid of apertures and times.
pub fn cone_grid(
    model: &VectorFieldModel,
    points: &[Vec<f64>],
    d_s: usize,
    apertures: &[f64],
    times: &[f64],
    opts: &ConeOptions,
) -> Result<Vec<ConeGridEntry>> {
    let mut out = Vec::new();
    for &t in times {
        for &a in apertures {
            let r = cone_invariance(model, points, d_s, a, t, opts)?;
            out.push(ConeGridEntry {
                a,
                t,
                pass_fraction: r.pass_fraction,
                worst_margin: r.worst_margin,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub sampled_points: usize,
    pub params: CheckParams,
    pub pass_fraction: f64,
    pub worst_margin: f64,
    pub points: Vec<PointDiagnostic>,
    /// Mean of the per-point slopes of log(‖Dφ_t|E_s‖·‖Dφ_{−t}|E_cu‖) against t.
    pub mean_slope: f64,
    pub t_est: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct DominationOptions {
    pub t_est: f64,
    pub splitting: SplittingOptions,
}

impl Default for DominationOptions {
    fn default() -> Self {
        DominationOptions {
            t_est: DEFAULT_T_EST,
            splitting: SplittingOptions::default(),
        }
    }
}

fn domination_point(
    model: &VectorFieldModel,
    x: &[f64],
    d_s: usize,
    t: f64,
    opts: &DominationOptions,
) -> Result<f64> {
    let d = model.dim;
    let sx = finite_time_splitting_with(model, x, d_s, opts.t_est, &opts.splitting)?;
    let ev = tangent_flow_with(
        model,
        x,
        &DMatrix::identity(d, d),
        t,
        opts.splitting.tol,
        RENORM_INTERVAL,
    )?;
    let mut ts = Vec::new();
    let mut vals = Vec::new();
    for k in 1..ev.times.len() {
        let m = ev.transported_at(k);
        let sy =
            finite_time_splitting_with(model, &ev.points[k], d_s, opts.t_est, &opts.splitting)?;
        let binv = sy
            .basis()
            .try_inverse()
            .ok_or_else(|| Error::Degeneracy("splitting estimate is not transverse".into()))?;
        // stable block in the stable coordinates at φ_t x: contamination along
        // the center-unstable directions is projected out
        let stable_block = binv.rows(0, d_s) * &m * &sx.e_s;
        let s_norm = stable_block.singular_values().max();
        let cu_img = &m * &sx.e_cu;
        let (sv, _) = svd_ascending(&cu_img)?;
        let cu_min = sv[0];
        let v = s_norm.ln() - cu_min.ln();
        if !v.is_finite() {
            return Err(Error::Numeric("non-finite domination product".into()));
        }
        ts.push(ev.times[k]);
        vals.push(v);
    }
    if ts.len() < 2 {
        return Err(Error::InsufficientData(
            "need at least two checkpoints".into(),
        ));
    }
    Ok(linear_fit(&ts, &vals).0)
}

/// Fits the growth rate of ‖Dφ_t|E_s(x)‖·‖Dφ_{−t}|E_cu(φ_t x)‖ over checkpoints up to `t`.
pub fn domination(
    model: &VectorFieldModel,
    points: &[Vec<f64>],
    d_s: usize,
    t: f64,
    opts: &DominationOptions,
) -> Result<DominationReport> {
    check_ds(model.dim, d_s, 2)?;
    if !(t > 0.0) {
        return Err(Error::Precondition("horizon must be positive".into()));
    }
    let diags: Vec<PointDiagnostic> = points
        .par_iter()
        .enumerate()
        .map(|(i, x)| match domination_point(model, x, d_s, t, opts) {
            Ok(slope) => PointDiagnostic {
                point_index: i,
                margin: -slope,
                pass: slope < 0.0,
                value: slope,
                error: None,
            },
            Err(e) => PointDiagnostic::failed(i, &e),
        })
        .collect();
    let ok: Vec<f64> = diags
        .iter()
        .filter(|p| p.error.is_none())
        .map(|p| p.value)
        .collect();
    let mean_slope = if ok.is_empty() {
        f64::NAN
    } else {
        ok.iter().sum::<f64>() / ok.len() as f64
    };
    Ok(DominationReport {
        sampled_points: points.len(),
        params: CheckParams { a: None, t, d_s },
        pass_fraction: pass_fraction(&diags),
        worst_margin: worst_margin(&diags),
        points: diags,
        mean_slope,
        t_est: opts.t_est,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub sampled_points: usize,
    pub params: CheckParams,
    pub pass_fraction: f64,
    pub worst_margin: f64,
    pub points: Vec<PointDiagnostic>,
    /// Least-squares slope of the point-averaged minimal log area.
    pub theta: f64,
    /// exp of the smallest per-point intercept.
    #[serde(rename = "K")]
    pub k: f64,
    pub pass: bool,
    pub planes_per_point: usize,
    pub times: Vec<f64>,
    /// Point-averaged minimal log area at each checkpoint.
    pub mean_min_log_area: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct ExpansionOptions {
    pub t_est: f64,
    pub random_planes: usize,
    pub seed: u64,
    pub splitting: SplittingOptions,
}

impl Default for ExpansionOptions {
    fn default() -> Self {
        ExpansionOptions {
            t_est: DEFAULT_T_EST,
            random_planes: 20,
            seed: 0,
            splitting: SplittingOptions::default(),
        }
    }
}

/// Minimal log area over the tested planes at each checkpoint.
fn expansion_point(
    model: &VectorFieldModel,
    x: &[f64],
    d_s: usize,
    t: f64,
    opts: &ExpansionOptions,
    index: usize,
) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let d = model.dim;
    let tol = opts.splitting.tol;
    let sx = finite_time_splitting_with(model, x, d_s, opts.t_est, &opts.splitting)?;
    let e = &sx.e_cu;
    let d_cu = e.ncols();
    let mut planes: Vec<DMatrix<f64>> = Vec::new();
    for (i, j) in crate::linalg::pairs(d_cu) {
        let mut p = DMatrix::zeros(d, 2);
        p.set_column(0, &e.column(i));
        p.set_column(1, &e.column(j));
        planes.push(p);
    }
    if d_cu > 2 {
        let mut rng = seeded(child_seed(opts.seed, 0x5ec, index as u64));
        for _ in 0..opts.random_planes {
            let c = DMatrix::from_fn(d_cu, 2, |_, _| normal(&mut rng));
            let (q, _) = qr_positive(&c)?;
            planes.push(e * q);
        }
        // least expanded plane of E_cu at the final time
        let ev = tangent_flow_with(model, x, e, t, tol, RENORM_INTERVAL)?;
        let (r, _) = ev.triangular_factor();
        let (_, v) = svd_ascending(&r)?;
        planes.push(e * v.columns(0, 2));
    }
    let mut times = Vec::new();
    let mut min_area: Vec<f64> = Vec::new();
    for p in &planes {
        let ev = tangent_flow_with(model, x, p, t, tol, RENORM_INTERVAL)?;
        if times.is_empty() {
            times = ev.times.clone();
            min_area = vec![f64::INFINITY; times.len()];
        }
        for (k, la) in ev.log_area.iter().enumerate() {
            min_area[k] = min_area[k].min(la[0]);
        }
    }
    Ok((times, min_area, planes.len()))
}

/// Growth of the least-expanded 2-plane area inside the center-unstable estimate.
pub fn sectional_expansion(
    model: &VectorFieldModel,
    points: &[Vec<f64>],
    d_s: usize,
    t: f64,
    opts: &ExpansionOptions,
) -> Result<ExpansionReport> {
    check_ds(model.dim, d_s, 2)?;
    if !(t > 0.0) {
        return Err(Error::Precondition("horizon must be positive".into()));
    }
    if points.is_empty() {
        return Err(Error::InsufficientData("no sample points".into()));
    }
    let res: Vec<Result<(Vec<f64>, Vec<f64>, usize)>> = points
        .par_iter()
        .enumerate()
        .map(|(i, x)| expansion_point(model, x, d_s, t, opts, i))
        .collect();
    let mut diags = Vec::with_capacity(points.len());
    let mut curves: Vec<Vec<f64>> = Vec::new();
    let mut times: Vec<f64> = Vec::new();
    let mut min_intercept = f64::INFINITY;
    let mut planes = 0;
    for (i, r) in res.iter().enumerate() {
        match r {
            Ok((ts, ms, np)) => {
                let (slope, intercept, _) = linear_fit(ts, ms);
                min_intercept = min_intercept.min(intercept);
                planes = *np;
                diags.push(PointDiagnostic {
                    point_index: i,
                    margin: slope,
                    pass: slope > 0.0,
                    value: slope,
                    error: None,
                });
                if times.is_empty() {
                    times = ts.clone();
                }
                curves.push(ms.clone());
            }
            Err(e) => diags.push(PointDiagnostic::failed(i, e)),
        }
    }
    if curves.is_empty() {
        return Err(Error::InsufficientData("every sample point failed".into()));
    }
    let mean: Vec<f64> = (0..times.len())
        .map(|k| curves.iter().map(|c| c[k]).sum::<f64>() / curves.len() as f64)
        .collect();
    let theta = linear_fit(&times, &mean).0;
    Ok(ExpansionReport {
        sampled_points: points.len(),
        params: CheckParams { a: None, t, d_s },
        pass_fraction: pass_fraction(&diags),
        worst_margin: worst_margin(&diags),
        points: diags,
        theta,
        k: min_intercept.exp(),
        pass: theta > 0.0,
        planes_per_point: planes,
        times,
        mean_min_log_area: mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    /// Sorted descending.
    pub exponents: Vec<f64>,
    /// Spread of each running estimate over the last 10% of checkpoints.
    pub band: Vec<f64>,
    pub wide_band: bool,
    #[serde(rename = "T")]
    pub t: f64,
    pub warmup: f64,
    pub sum: f64,
    /// Time average of div G along the same orbit (trapezoid rule, spacing 0.01).
    pub divergence_average: f64,
}

/// Band width above which the estimate is flagged as unconverged.
pub const WIDE_BAND: f64 = 0.01;

/// Benettin QR estimate of all exponents from `x0` over `[warmup, warmup + t]`.
pub fn lyapunov_spectrum(
    model: &VectorFieldModel,
    x0: &[f64],
    t: f64,
    warmup: f64,
    tol: f64,
) -> Result<LyapunovReport> {
    let d = model.dim;
    if !(t > 0.0) || !(warmup >= 0.0) {
        return Err(Error::Precondition("need T > 0 and warmup ≥ 0".into()));
    }
    let ev = tangent_flow_with(
        model,
        x0,
        &DMatrix::identity(d, d),
        warmup + t,
        tol,
        RENORM_INTERVAL,
    )?;
    let k0 = ev
        .times
        .iter()
        .position(|&s| s >= warmup - 1e-12)
        .unwrap_or(0);
    let base = ev.log_growth[k0].clone();
    let t0 = ev.times[k0];
    let last = ev.times.len() - 1;
    let rate = |k: usize, i: usize| (ev.log_growth[k][i] - base[i]) / (ev.times[k] - t0);
    let mut order: Vec<usize> = (0..d).collect();
    let finals: Vec<f64> = (0..d).map(|i| rate(last, i)).collect();
    order.sort_by(|&a, &b| finals[b].total_cmp(&finals[a]));
    let window_start = (k0 + 1).max(last - (last - k0) / 10);
    let band: Vec<f64> = order
        .iter()
        .map(|&i| {
            let vals: Vec<f64> = (window_start..=last).map(|k| rate(k, i)).collect();
            vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - vals.iter().cloned().fold(f64::INFINITY, f64::min)
        })
        .collect();
    let exponents: Vec<f64> = order.iter().map(|&i| finals[i]).collect();
    // independent divergence average on a fine grid of the same orbit segment
    let h = 0.01;
    let n = (t / h).round().max(1.0) as usize;
    let start = ev.points[k0].clone();
    let pts = sample_grid(model, &start, 0.0, t / n as f64, n + 1, tol)?;
    let divs: Vec<f64> = pts
        .iter()
        .map(|p| model.divergence(p))
        .collect::<Result<_>>()?;
    let integral: f64 = divs.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum::<f64>() * (t / n as f64);
    Ok(LyapunovReport {
        sum: exponents.iter().sum(),
        wide_band: band.iter().any(|b| *b > WIDE_BAND),
        exponents,
        band,
        t,
        warmup,
        divergence_average: integral / t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gram_deviation, max_principal_angle};

    fn diag3() -> VectorFieldModel {
        VectorFieldModel::diagonal(&[-2.0, 1.0, 3.0])
    }

    #[test]
    fn linear_splitting_is_exact() {
        let m = diag3();
        let x = [0.3, -0.2, 0.1];
        let s = finite_time_splitting(&m, &x, 1, 1.0).unwrap();
        assert!(s.e_s[(0, 0)].abs() > 1.0 - 1e-10);
        assert!((s.gap.ln() - 3.0).abs() < 1e-6, "{}", s.gap);
        assert!(gram_deviation(&s.e_cu) < 1e-12);
        let g = DVector::from_vec(m.eval_field(&x).unwrap());
        assert!(angle_to_subspace(&g, &s.e_cu) < 1e-12);
        assert!(!s.low_confidence);
    }

    #[test]
    fn lorenz_splitting_contains_flow_and_is_consistent() {
        let m = VectorFieldModel::lorenz_classic();
        let x = crate::flow::flow_map(&m, &[1.0, 1.0, 1.0], 30.0, 1e-10).unwrap();
        let a = finite_time_splitting(&m, &x, 1, 2.0).unwrap();
        let b = finite_time_splitting(&m, &x, 1, 4.0).unwrap();
        assert!(max_principal_angle(&a.e_s, &b.e_s) < 0.05);
        assert!(a.flow_angle.unwrap() < 1e-3, "{:?}", a.flow_angle);
        let c = finite_time_splitting(&m, &x, 1, 5.0).unwrap();
        assert!(c.gap > 10.0);
    }

    #[test]
    fn linear_cones_contract() {
        let m = diag3();
        // points in the invariant center-unstable plane, where the flow direction lies in it
        let pts = vec![vec![0.0, 0.2, -0.3], vec![0.0, 0.0, 0.0]];
        let r = cone_invariance(&m, &pts, 1, 0.5, 1.0, &ConeOptions::default()).unwrap();
        assert_eq!(r.pass_fraction, 1.0);
        for p in &r.points {
            // stable part shrinks by e^{-3} relative to the slowest center-unstable growth
            assert!(
                p.value <= 0.5 * (-3.0f64).exp() * (1.0 + 1e-6),
                "{}",
                p.value
            );
        }
        let r0 = cone_invariance(&m, &pts, 1, 0.5, 0.0, &ConeOptions::default()).unwrap();
        assert_eq!(r0.pass_fraction, 1.0);
        assert!(r0.worst_margin.abs() < 1e-12);
        assert!(r0.passes_at(0.7).iter().all(|b| *b));
    }

    #[test]
    fn linear_domination_slope() {
        let m = diag3();
        let r = domination(
            &m,
            &[vec![0.0, 0.1, -0.1]],
            1,
            3.0,
            &DominationOptions::default(),
        )
        .unwrap();
        assert!(
            (r.points[0].value + 3.0).abs() < 1e-6,
            "{}",
            r.points[0].value
        );
        assert_eq!(r.pass_fraction, 1.0);
        let m2 = VectorFieldModel::diagonal(&[-1.0, 2.0]);
        assert!(matches!(
            domination(
                &m2,
                &[vec![0.0, 0.0]],
                1,
                1.0,
                &DominationOptions::default()
            ),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn linear_sectional_rates() {
        let m = diag3();
        let r =
            sectional_expansion(&m, &[vec![0.0; 3]], 1, 4.0, &ExpansionOptions::default()).unwrap();
        assert!((r.theta - 4.0).abs() < 1e-6, "{}", r.theta);
        assert!(r.pass);
        let ctl = VectorFieldModel::diagonal(&[-2.0, -1.0, 4.0, 0.5]);
        let r = sectional_expansion(&ctl, &[vec![0.0; 4]], 1, 4.0, &ExpansionOptions::default())
            .unwrap();
        assert!(r.theta < 0.0, "{}", r.theta);
        assert!((r.theta + 0.5).abs() < 1e-6);
        assert!(!r.pass);
    }

    #[test]
    fn diagnostics_csv_shape() {
        let p = vec![PointDiagnostic {
            point_index: 3,
            margin: 0.25,
            pass: true,
            value: 0.25,
            error: None,
        }];
        let csv = diagnostics_csv(&p);
        assert!(csv.starts_with("point_index,margin,pass\n3,"));
        assert!(csv.trim_end().ends_with(",true"));
    }

    #[test]
    fn lyapunov_linear_and_scalar() {
        let r = lyapunov_spectrum(&diag3(), &[0.0; 3], 100.0, 0.0, 1e-10).unwrap();
        for (a, b) in r.exponents.iter().zip([3.0, 1.0, -2.0]) {
            assert!((a - b).abs() < 1e-8);
        }
        let r = lyapunov_spectrum(
            &VectorFieldModel::diagonal(&[-1.0]),
            &[1.0],
            100.0,
            0.0,
            1e-10,
        )
        .unwrap();
        assert!((r.exponents[0] + 1.0).abs() < 1e-8);
        assert!((r.divergence_average + 1.0).abs() < 1e-12);
    }
}
