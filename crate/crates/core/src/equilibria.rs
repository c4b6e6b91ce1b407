//! Equilibria, their spectra and Lorenz-like classification, and the
//! q-strong dissipativity conditions.

use nalgebra::{Complex, DMatrix, DVector, Schur};
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::model::VectorFieldModel;
use crate::rng::halton;

/// Real parts within this distance of zero count as non-hyperbolic.
pub const HYPERBOLIC_TOL: f64 = 1e-8;
/// Imaginary parts below this count as real.
pub const REAL_TOL: f64 = 1e-8;
pub const DEDUP_DIST: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub position: Vec<f64>,
    /// Ordered by increasing real part.
    pub eigenvalues: Vec<Eigenvalue>,
    pub hyperbolic: bool,
    pub index: usize,
    pub lorenz_like: bool,
    pub lambda_s: Option<f64>,
    pub lambda_u: Option<f64>,
    pub residual: f64,
}

fn residual(model: &VectorFieldModel, x: &[f64]) -> f64 {
    let mut g = vec![0.0; model.dim];
    model.eval_into(x, &mut g);
    norm(&g)
}

fn newton_step(model: &VectorFieldModel, x: &[f64]) -> Option<Vec<f64>> {
    let d = model.dim;
    let mut g = vec![0.0; d];
    model.eval_into(x, &mut g);
    let mut jac = vec![0.0; d * d];
    model.jacobian_into(x, &mut jac);
    let j = DMatrix::from_row_slice(d, d, &jac);
    let dx = j.lu().solve(&DVector::from_vec(g))?;
    if dx.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(dx.as_slice().to_vec())
}

/// Damped Newton from `x0`; returns a polished root or `None`.
fn newton(model: &VectorFieldModel, x0: &[f64]) -> Option<Vec<f64>> {
    let mut x = x0.to_vec();
    let mut r = residual(model, &x);
    for _ in 0..200 {
        if r < 1e-12 {
            break;
        }
        let dx = newton_step(model, &x)?;
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a - alpha * b).collect();
            let rt = residual(model, &trial);
            if rt < r || (alpha < 1e-6 && rt.is_finite()) {
                x = trial;
                r = rt;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-6 {
                return None;
            }
        }
    }
    if r >= 1e-10 {
        return None;
    }
    // polish: full steps while they help
    for _ in 0..10 {
        if r < 1e-13 {
            break;
        }
        let Some(dx) = newton_step(model, &x) else {
            break;
        };
        let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a - b).collect();
        let rt = residual(model, &trial);
        if rt < r {
            x = trial;
            r = rt;
        } else {
            break;
        }
    }
    if r < 1e-12 {
        Some(x)
    } else {
        None
    }
}

/// Equilibrium reached by damped Newton from `guess`.
pub fn polish_equilibrium(model: &VectorFieldModel, guess: &[f64]) -> Result<Vec<f64>> {
    if guess.len() != model.dim {
        return Err(Error::Input(
            "guess dimension does not match the model".into(),
        ));
    }
    newton(model, guess).ok_or_else(|| Error::Numeric("Newton iteration did not converge".into()))
}

/// Roots of the field inside `[lo, hi]` found by damped Newton from
/// `n_seeds` scrambled Halton seeds, sorted lexicographically.
pub fn find_equilibria(
    model: &VectorFieldModel,
    lo: &[f64],
    hi: &[f64],
    n_seeds: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let d = model.dim;
    if lo.len() != d || hi.len() != d || lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
        return Err(Error::Input(
            "search box must satisfy lo < hi in every coordinate".into(),
        ));
    }
    let offset = (crate::rng::mix(seed) % 100_003) as usize;
    let seeds: Vec<Vec<f64>> = (0..n_seeds)
        .map(|i| {
            let u = halton(offset + i + 1, d);
            (0..d).map(|k| lo[k] + (hi[k] - lo[k]) * u[k]).collect()
        })
        .collect();
    let found: Vec<Option<Vec<f64>>> = seeds.par_iter().map(|s| newton(model, s)).collect();
    let mut roots: Vec<Vec<f64>> = Vec::new();
    for x in found.into_iter().flatten() {
        let inside = x
            .iter()
            .zip(lo.iter().zip(hi))
            .all(|(v, (a, b))| *v >= *a && *v <= *b);
        if inside
            && roots
                .iter()
                .all(|r| crate::linalg::dist(r, &x) > DEDUP_DIST)
        {
            roots.push(x);
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Ok(roots)
}

/// Bounding box of `sample` widened on each side by `margin` of its extent
/// plus one unit, so that flat or tiny samples still give a usable box.
pub fn padded_box(sample: &[Vec<f64>], margin: f64) -> (Vec<f64>, Vec<f64>) {
    let d = sample.first().map_or(0, |x| x.len());
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for x in sample {
        for k in 0..d {
            lo[k] = lo[k].min(x[k]);
            hi[k] = hi[k].max(x[k]);
        }
    }
    for k in 0..d {
        let pad = margin * (hi[k] - lo[k]) + 1.0;
        lo[k] -= pad;
        hi[k] += pad;
    }
    (lo, hi)
}

/// `roots` together with the equilibria polished from `guesses`, skipping
/// duplicates.
pub fn merge_equilibria(
    model: &VectorFieldModel,
    mut roots: Vec<Vec<f64>>,
    guesses: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    for g in guesses {
        let p = polish_equilibrium(model, g)?;
        if roots
            .iter()
            .all(|r| crate::linalg::dist(r, &p) > DEDUP_DIST)
        {
            roots.push(p);
        }
    }
    Ok(roots)
}

/// Eigenvalues of a real square matrix ordered by (real part, imaginary part).
pub fn sorted_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Eigenvalue>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    let schur = Schur::try_new(m.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::Numeric("Schur iteration did not converge".into()))?;
    let ev: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().cloned().collect();
    let mut out: Vec<Eigenvalue> = ev
        .iter()
        .map(|c| Eigenvalue { re: c.re, im: c.im })
        .collect();
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(out)
}

/// Spectrum and Lorenz-like verdict at an equilibrium with stable dimension `d_s`.
pub fn classify_equilibrium(
    model: &VectorFieldModel,
    sigma: &[f64],
    d_s: usize,
) -> Result<EquilibriumReport> {
    let d = model.dim;
    if sigma.len() != d {
        return Err(Error::Input(format!(
            "point has length {} but model dim is {d}",
            sigma.len()
        )));
    }
    if d_s < 1 || d_s + 2 > d {
        return Err(Error::Precondition(format!(
            "need 1 ≤ d_s ≤ d − 2, got d_s = {d_s}, d = {d}"
        )));
    }
    let res = residual(model, sigma);
    if !(res < 1e-10) {
        return Err(Error::Precondition(format!(
            "not an equilibrium: ‖G‖ = {res:e}"
        )));
    }
    let eig = sorted_eigenvalues(&model.eval_jacobian(sigma)?)?;
    let hyperbolic = eig.iter().all(|e| e.re.abs() > HYPERBOLIC_TOL);
    let index = eig.iter().filter(|e| e.re < 0.0).count();
    let lambda_u = eig
        .iter()
        .filter(|e| e.re >= 0.0)
        .map(|e| e.re)
        .reduce(f64::min);
    let weak = eig[d_s];
    let lambda_s = if weak.im.abs() < REAL_TOL {
        Some(weak.re)
    } else {
        None
    };
    let lorenz_like = match (lambda_s, lambda_u) {
        (Some(ls), Some(lu)) => hyperbolic && index == d_s + 1 && -lu < ls && ls < 0.0 && 0.0 < lu,
        _ => false,
    };
    Ok(EquilibriumReport {
        position: sigma.to_vec(),
        eigenvalues: eig,
        hyperbolic,
        index,
        lorenz_like,
        lambda_s,
        lambda_u,
        residual: res,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumCondition {
    pub position: Vec<f64>,
    /// Re(λ₁ − λ_{d_s+1} + q λ_d).
    pub value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledCondition {
    /// Sampled sup of div G + (d_s q − 1)‖DG‖_F.
    pub sup: f64,
    pub argmax: Vec<f64>,
    pub pass: bool,
    pub sample_size: usize,
    /// Same quantity over a box grid, when one was requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_sup: Option<f64>,
}

fn ser_qmax<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) => s.serialize_f64(*x),
        None => s.serialize_str("none"),
    }
}

fn de_qmax<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
    let v = serde_json::Value::deserialize(d)?;
    Ok(v.as_f64())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipativityReport {
    pub d_s: usize,
    pub q: f64,
    pub cond_a: Vec<EquilibriumCondition>,
    pub cond_a_pass: bool,
    pub cond_b: SampledCondition,
    /// Largest q passing both conditions, or "none".
    #[serde(serialize_with = "ser_qmax", deserialize_with = "de_qmax")]
    pub q_max: Option<f64>,
    #[serde(serialize_with = "ser_qmax", deserialize_with = "de_qmax")]
    pub q_max_a: Option<f64>,
    #[serde(serialize_with = "ser_qmax", deserialize_with = "de_qmax")]
    pub q_max_b: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Default)]
pub struct DissipativityOptions {
    /// Equilibria to test; when absent they are searched in the sample's
    /// bounding box enlarged by `margin` of its extent plus one unit per side.
    pub equilibria: Option<Vec<Vec<f64>>>,
    pub margin: f64,
    /// Initial guesses polished by Newton and added to the equilibria.
    pub guesses: Vec<Vec<f64>>,
    pub n_seeds: usize,
    pub seed: u64,
    /// Optional grid `(lo, hi, points per axis)` for the neighbourhood variant of (b).
    pub grid: Option<(Vec<f64>, Vec<f64>, usize)>,
}

impl DissipativityOptions {
    pub fn standard() -> Self {
        DissipativityOptions {
            equilibria: None,
            margin: 0.1,
            guesses: Vec::new(),
            n_seeds: 200,
            seed: 0,
            grid: None,
        }
    }
}

struct Spectra {
    positions: Vec<Vec<f64>>,
    /// (Re λ₁, Re λ_{d_s+1}, Re λ_d) per equilibrium.
    parts: Vec<(f64, f64, f64)>,
}

fn cond_a_values(sp: &Spectra, q: f64) -> Vec<f64> {
    sp.parts
        .iter()
        .map(|(l1, ls, ld)| l1 - ls + q * ld)
        .collect()
}

/// Pointwise div G + (d_s q − 1)‖DG‖_F.
pub fn cond_b_value(model: &VectorFieldModel, x: &[f64], d_s: usize, q: f64) -> f64 {
    let d = model.dim;
    let mut jac = vec![0.0; d * d];
    model.jacobian_into(x, &mut jac);
    let div: f64 = (0..d).map(|i| jac[i * d + i]).sum();
    let fro = jac.iter().map(|v| v * v).sum::<f64>().sqrt();
    div + (d_s as f64 * q - 1.0) * fro
}

/// Sup of cond (b) over points with the index of the maximiser.
fn cond_b_sup(model: &VectorFieldModel, pts: &[Vec<f64>], d_s: usize, q: f64) -> (f64, usize) {
    pts.par_iter()
        .enumerate()
        .map(|(i, x)| (cond_b_value(model, x, d_s, q), i))
        .reduce(
            || (f64::NEG_INFINITY, usize::MAX),
            |a, b| {
                if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                    b
                } else {
                    a
                }
            },
        )
}

fn bisect_qmax(lo: f64, hi: f64, pass: impl Fn(f64) -> bool) -> Option<f64> {
    if !pass(lo) {
        return None;
    }
    if pass(hi) {
        return Some(hi);
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > 1e-4 {
        let m = 0.5 * (a + b);
        if pass(m) {
            a = m;
        } else {
            b = m;
        }
    }
    Some(a)
}

fn grid_points(lo: &[f64], hi: &[f64], n: usize) -> Vec<Vec<f64>> {
    let d = lo.len();
    let n = n.max(2);
    let total = n.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            (0..d)
                .map(|k| {
                    let i = idx % n;
                    idx /= n;
                    lo[k] + (hi[k] - lo[k]) * i as f64 / (n - 1) as f64
                })
                .collect()
        })
        .collect()
}

/// Evaluates both strong-dissipativity conditions at exponent `q`.
pub fn strong_dissipativity(
    model: &VectorFieldModel,
    d_s: usize,
    q: f64,
    sample: &[Vec<f64>],
    opts: &DissipativityOptions,
) -> Result<DissipativityReport> {
    let d = model.dim;
    if d_s < 1 || d_s >= d {
        return Err(Error::Precondition(format!("need 1 ≤ d_s < d, got {d_s}")));
    }
    let q_min = 1.0 / d_s as f64;
    if !(q > q_min) {
        return Err(Error::Precondition(format!(
            "q = {q} must exceed 1/d_s = {q_min}"
        )));
    }
    if sample.is_empty() {
        return Err(Error::Precondition("attractor sample is empty".into()));
    }
    if sample.iter().any(|x| x.len() != d) {
        return Err(Error::Input("sample point dimension mismatch".into()));
    }
    let positions = match &opts.equilibria {
        Some(e) => e.clone(),
        None => {
            let (lo, hi) = padded_box(sample, opts.margin);
            find_equilibria(model, &lo, &hi, opts.n_seeds.max(1), opts.seed)?
        }
    };
    let positions = merge_equilibria(model, positions, &opts.guesses)?;
    let mut parts = Vec::with_capacity(positions.len());
    for p in &positions {
        let eig = sorted_eigenvalues(&model.eval_jacobian(p)?)?;
        parts.push((eig[0].re, eig[d_s].re, eig[d - 1].re));
    }
    let sp = Spectra { positions, parts };

    let a_vals = cond_a_values(&sp, q);
    let cond_a: Vec<EquilibriumCondition> = sp
        .positions
        .iter()
        .zip(&a_vals)
        .map(|(p, v)| EquilibriumCondition {
            position: p.clone(),
            value: *v,
            pass: *v < 0.0,
        })
        .collect();
    let cond_a_pass = cond_a.iter().all(|c| c.pass);

    let (sup, arg) = cond_b_sup(model, sample, d_s, q);
    let grid = opts
        .grid
        .as_ref()
        .map(|(lo, hi, n)| grid_points(lo, hi, *n));
    let grid_sup = grid.as_ref().map(|g| cond_b_sup(model, g, d_s, q).0);
    let cond_b = SampledCondition {
        sup,
        argmax: sample[arg].clone(),
        pass: sup < 0.0,
        sample_size: sample.len(),
        grid_sup,
    };

    let lo = q_min + 1e-6;
    let pass_a = |qq: f64| cond_a_values(&sp, qq).iter().all(|v| *v < 0.0);
    let pass_b = |qq: f64| cond_b_sup(model, sample, d_s, qq).0 < 0.0;
    let q_max_a = bisect_qmax(lo, 10.0, pass_a);
    let q_max_b = bisect_qmax(lo, 10.0, pass_b);
    let q_max = bisect_qmax(lo, 10.0, |qq| pass_a(qq) && pass_b(qq));

    Ok(DissipativityReport {
        d_s,
        q,
        pass: cond_a_pass && cond_b.pass,
        cond_a,
        cond_a_pass,
        cond_b,
        q_max,
        q_max_a,
        q_max_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lorenz_origin_eigs() -> [f64; 3] {
        let (s, r, b) = (10.0f64, 28.0f64, 8.0 / 3.0);
        let disc = ((s + 1.0).powi(2) + 4.0 * s * (r - 1.0)).sqrt();
        [(-(s + 1.0) - disc) / 2.0, -b, (-(s + 1.0) + disc) / 2.0]
    }

    #[test]
    fn lorenz_roots() {
        let m = VectorFieldModel::lorenz_classic();
        let roots = find_equilibria(&m, &[-30.0; 3], &[30.0; 3], 200, 1).unwrap();
        assert_eq!(roots.len(), 3, "{roots:?}");
        let c = (8.0f64 / 3.0 * 27.0).sqrt();
        let expect = [vec![-c, -c, 27.0], vec![0.0; 3], vec![c, c, 27.0]];
        for (r, e) in roots.iter().zip(&expect) {
            assert!(crate::linalg::dist(r, e) < 1e-9, "{r:?}");
            assert!(residual(&m, r) < 1e-12);
        }
    }

    #[test]
    fn subcritical_lorenz_has_only_origin() {
        let m = VectorFieldModel::lorenz(10.0, 0.5, 8.0 / 3.0);
        let roots = find_equilibria(&m, &[-30.0; 3], &[30.0; 3], 200, 1).unwrap();
        assert_eq!(roots.len(), 1);
        let rep = classify_equilibrium(&m, &roots[0], 1).unwrap();
        assert_eq!(rep.index, 3);
        assert!(!rep.lorenz_like);
    }

    #[test]
    fn linear_saddle_root() {
        let m = VectorFieldModel::diagonal(&[-1.0, 2.0]);
        let roots = find_equilibria(&m, &[-1.0, -2.0], &[3.0, 1.0], 50, 0).unwrap();
        assert_eq!(roots.len(), 1);
        assert!(norm(&roots[0]) < 1e-12);
    }

    #[test]
    fn lorenz_origin_classification() {
        let m = VectorFieldModel::lorenz_classic();
        let rep = classify_equilibrium(&m, &[0.0; 3], 1).unwrap();
        let e = lorenz_origin_eigs();
        for (a, b) in rep.eigenvalues.iter().zip(e) {
            assert!((a.re - b).abs() < 1e-9 && a.im.abs() < 1e-12);
        }
        assert!(rep.lorenz_like && rep.hyperbolic);
        assert_eq!(rep.index, 2);
        assert!((rep.lambda_s.unwrap() + 8.0 / 3.0).abs() < 1e-9);
        let tr: f64 = rep.eigenvalues.iter().map(|e| e.re).sum();
        assert!((tr + 41.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn diagonal_classification() {
        let m = VectorFieldModel::diagonal(&[-2.0, -1.0, 3.0]);
        let rep = classify_equilibrium(&m, &[0.0; 3], 1).unwrap();
        assert_eq!(rep.lambda_s, Some(-1.0));
        assert_eq!(rep.lambda_u, Some(3.0));
        assert!(rep.lorenz_like);
        // weak stable faster than unstable breaks the inequality
        let m = VectorFieldModel::diagonal(&[-5.0, -4.0, 3.0]);
        assert!(!classify_equilibrium(&m, &[0.0; 3], 1).unwrap().lorenz_like);
    }

    #[test]
    fn complex_weak_stable_pair_is_not_lorenz_like() {
        let m = VectorFieldModel::linear(vec![
            vec![-3.0, 0.0, 0.0, 0.0],
            vec![0.0, -1.0, 2.0, 0.0],
            vec![0.0, -2.0, -1.0, 0.0],
            vec![0.0, 0.0, 0.0, 4.0],
        ])
        .unwrap();
        let rep = classify_equilibrium(&m, &[0.0; 4], 1).unwrap();
        assert!(rep.lambda_s.is_none());
        assert!(!rep.lorenz_like);
    }

    #[test]
    fn classification_preconditions() {
        let m = VectorFieldModel::lorenz_classic();
        assert!(matches!(
            classify_equilibrium(&m, &[1.0, 1.0, 1.0], 1),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            classify_equilibrium(&m, &[0.0; 3], 2),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn dissipativity_arithmetic_at_origin() {
        let m = VectorFieldModel::lorenz_classic();
        let opts = DissipativityOptions {
            equilibria: Some(vec![vec![0.0; 3]]),
            ..DissipativityOptions::standard()
        };
        let sample = vec![vec![1.0, 1.0, 20.0]];
        let r = strong_dissipativity(&m, 1, 1.2, &sample, &opts).unwrap();
        assert!((r.cond_a[0].value + 5.9679).abs() < 1e-3);
        assert!(r.cond_a_pass);
        let r2 = strong_dissipativity(&m, 1, 2.0, &sample, &opts).unwrap();
        assert!((r2.cond_a[0].value - 3.4944).abs() < 1e-3);
        assert!(!r2.cond_a_pass);
        let e = lorenz_origin_eigs();
        let q_star = (e[1] - e[0]) / e[2];
        assert!((r.q_max_a.unwrap() - q_star).abs() < 1e-3);
        assert!(matches!(
            strong_dissipativity(&m, 1, 1.0, &sample, &opts),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn q_max_brackets_the_threshold() {
        let m = VectorFieldModel::lorenz_classic();
        let sample = vec![vec![1.0, 1.0, 20.0], vec![-5.0, -3.0, 30.0]];
        let r =
            strong_dissipativity(&m, 1, 1.1, &sample, &DissipativityOptions::standard()).unwrap();
        let q = r.q_max.unwrap();
        let opts = DissipativityOptions::standard();
        assert!(
            strong_dissipativity(&m, 1, q - 1e-6, &sample, &opts)
                .unwrap()
                .pass
        );
        assert!(
            !strong_dissipativity(&m, 1, q + 1e-3, &sample, &opts)
                .unwrap()
                .pass
        );
        let json = serde_json::to_value(&r).unwrap();
        assert!(json.get("cond_a").is_some() && json.get("q_max").is_some());
    }

    #[test]
    fn q_max_none_serializes_as_string() {
        let r = DissipativityReport {
            d_s: 1,
            q: 1.5,
            cond_a: vec![],
            cond_a_pass: true,
            cond_b: SampledCondition {
                sup: 1.0,
                argmax: vec![0.0],
                pass: false,
                sample_size: 1,
                grid_sup: None,
            },
            q_max: None,
            q_max_a: Some(2.0),
            q_max_b: None,
            pass: false,
        };
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"q_max\":\"none\""));
        let back: DissipativityReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back.q_max, None);
    }

    #[test]
    fn padded_box_adds_fraction_and_unit() {
        let (lo, hi) = padded_box(&[vec![0.0, 5.0], vec![10.0, 5.0]], 0.1);
        assert_eq!(lo, vec![-2.0, 4.0]);
        assert_eq!(hi, vec![12.0, 6.0]);
    }

    #[test]
    fn guesses_outside_the_box_are_merged_once() {
        let m = VectorFieldModel::lorenz_classic();
        let c = 72f64.sqrt();
        let found = find_equilibria(&m, &[-20.0, -20.0, 5.0], &[20.0, 20.0, 50.0], 200, 0).unwrap();
        assert_eq!(found.len(), 2);
        let all = merge_equilibria(&m, found, &[vec![0.1, -0.1, 0.2], vec![c, c, 27.0]]).unwrap();
        assert_eq!(all.len(), 3);
        assert!(all[2].iter().all(|v| v.abs() < 1e-12));
    }
}
