//! Vector-field models: built-in families, user polynomial fields, analytic
//! Jacobians and seeded parameter perturbations.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lorenz,
    Linear,
    Polynomial,
    /// Planar center times a linear contraction, `ẋ = −ωy, ẏ = ωx, ż = −κz`.
    Product,
}

/// One monomial `coeff · Π x_i^{e_i}` contributing to coordinate `target`
/// (zero-based). Serialised as `[target, coeff, [e_1, ..., e_d]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "(usize, f64, Vec<u32>)", into = "(usize, f64, Vec<u32>)")]
pub struct PolyTerm {
    pub target: usize,
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

impl From<(usize, f64, Vec<u32>)> for PolyTerm {
    fn from((target, coeff, exponents): (usize, f64, Vec<u32>)) -> Self {
        PolyTerm {
            target,
            coeff,
            exponents,
        }
    }
}

impl From<PolyTerm> for (usize, f64, Vec<u32>) {
    fn from(t: PolyTerm) -> Self {
        (t.target, t.coeff, t.exponents)
    }
}

/// JSON form of a model, e.g.
/// `{"kind":"lorenz","params":{"sigma":10,"rho":28,"beta":2.6666666666666665}}`.
/// Unknown keys are ignored so the same document can carry sections and
/// probe defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: Option<ModelKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<PolyTerm>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorFieldModel {
    pub id: String,
    pub kind: ModelKind,
    pub dim: usize,
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<PolyTerm>,
    /// Row-major system matrix for the linear family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    /// Extra linear term `B·x` added by additive perturbations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub additive: Option<Vec<Vec<f64>>>,
    /// Evaluate `−G` instead of `G` (time reversal).
    #[serde(default)]
    pub reversed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationMode {
    ParameterScale,
    AdditiveLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub relative_magnitude: f64,
    pub seed: u64,
    pub mode: PerturbationMode,
}

fn param(params: &BTreeMap<String, f64>, name: &str) -> f64 {
    params.get(name).copied().unwrap_or(f64::NAN)
}

impl VectorFieldModel {
    pub fn lorenz(sigma: f64, rho: f64, beta: f64) -> Self {
        let params = BTreeMap::from([
            ("beta".to_string(), beta),
            ("rho".to_string(), rho),
            ("sigma".to_string(), sigma),
        ]);
        VectorFieldModel {
            id: format!("lorenz(sigma={sigma},rho={rho},beta={beta})"),
            kind: ModelKind::Lorenz,
            dim: 3,
            params,
            terms: Vec::new(),
            matrix: None,
            additive: None,
            reversed: false,
        }
    }

    /// The classical parameters (10, 28, 8/3).
    pub fn lorenz_classic() -> Self {
        Self::lorenz(10.0, 28.0, 8.0 / 3.0)
    }

    pub fn linear(matrix: Vec<Vec<f64>>) -> Result<Self> {
        let dim = matrix.len();
        if dim == 0 || matrix.iter().any(|r| r.len() != dim) {
            return Err(Error::Input(
                "linear field needs a square, non-empty matrix".into(),
            ));
        }
        if matrix.iter().flatten().any(|a| !a.is_finite()) {
            return Err(Error::Input("linear field matrix must be finite".into()));
        }
        Ok(VectorFieldModel {
            id: format!("linear{dim}d"),
            kind: ModelKind::Linear,
            dim,
            params: BTreeMap::new(),
            terms: Vec::new(),
            matrix: Some(matrix),
            additive: None,
            reversed: false,
        })
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        let d = entries.len();
        let m = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| if i == j { entries[i] } else { 0.0 })
                    .collect()
            })
            .collect();
        let mut model = Self::linear(m).expect("diagonal matrix is square");
        model.id = format!("diag{entries:?}");
        model
    }

    pub fn polynomial(dim: usize, terms: Vec<PolyTerm>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Input("polynomial field needs dim >= 1".into()));
        }
        for t in &terms {
            if t.target >= dim || t.exponents.len() != dim || !t.coeff.is_finite() {
                return Err(Error::Input(format!(
                    "bad polynomial term {:?} for dim {dim}",
                    (t.target, t.coeff, &t.exponents)
                )));
            }
        }
        Ok(VectorFieldModel {
            id: format!("polynomial{dim}d"),
            kind: ModelKind::Polynomial,
            dim,
            params: BTreeMap::new(),
            terms,
            matrix: None,
            additive: None,
            reversed: false,
        })
    }

    /// Center × contraction control field in R³.
    pub fn center_contraction(omega: f64, kappa: f64) -> Self {
        VectorFieldModel {
            id: format!("center3d(omega={omega},kappa={kappa})"),
            kind: ModelKind::Product,
            dim: 3,
            params: BTreeMap::from([("kappa".to_string(), kappa), ("omega".to_string(), omega)]),
            terms: Vec::new(),
            matrix: None,
            additive: None,
            reversed: false,
        }
    }

    pub fn from_config(cfg: &ModelConfig) -> Result<Self> {
        let kind = cfg
            .kind
            .ok_or_else(|| Error::Input("model config lacks \"kind\"".into()))?;
        let mut model = match kind {
            ModelKind::Lorenz => {
                let p = cfg.params.clone().unwrap_or_default();
                for name in ["sigma", "rho", "beta"] {
                    if !p.get(name).is_some_and(|v| v.is_finite()) {
                        return Err(Error::Input(format!(
                            "lorenz model needs finite param {name}"
                        )));
                    }
                }
                if cfg.dim.is_some_and(|d| d != 3) {
                    return Err(Error::Input("lorenz model has dim 3".into()));
                }
                Self::lorenz(p["sigma"], p["rho"], p["beta"])
            }
            ModelKind::Linear => {
                let m = cfg
                    .matrix
                    .clone()
                    .ok_or_else(|| Error::Input("linear model needs \"matrix\"".into()))?;
                Self::linear(m)?
            }
            ModelKind::Polynomial => {
                let dim = cfg
                    .dim
                    .ok_or_else(|| Error::Input("polynomial model needs \"dim\"".into()))?;
                Self::polynomial(dim, cfg.terms.clone().unwrap_or_default())?
            }
            ModelKind::Product => {
                let p = cfg.params.clone().unwrap_or_default();
                let omega = p.get("omega").copied().unwrap_or(1.0);
                let kappa = p.get("kappa").copied().unwrap_or(1.0);
                if !omega.is_finite() || !kappa.is_finite() {
                    return Err(Error::Input("product model params must be finite".into()));
                }
                Self::center_contraction(omega, kappa)
            }
        };
        if let Some(id) = &cfg.id {
            model.id = id.clone();
        }
        Ok(model)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ModelConfig =
            serde_json::from_str(text).map_err(|e| Error::Input(format!("model config: {e}")))?;
        Self::from_config(&cfg)
    }

    /// The time-reversed field `−G`.
    pub fn reversed(&self) -> Self {
        let mut m = self.clone();
        m.reversed = !self.reversed;
        m.id = match self.id.strip_prefix('-') {
            Some(base) => base.to_string(),
            None => format!("-{}", self.id),
        };
        m
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Input(format!(
                "point has dimension {} but model {} has dimension {}",
                x.len(),
                self.id,
                self.dim
            )));
        }
        Ok(())
    }

    /// Evaluates G(x) into `out` without dimension checks.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match self.kind {
            ModelKind::Lorenz => {
                let (s, r, b) = (
                    param(&self.params, "sigma"),
                    param(&self.params, "rho"),
                    param(&self.params, "beta"),
                );
                out[0] = s * (x[1] - x[0]);
                out[1] = x[0] * (r - x[2]) - x[1];
                out[2] = x[0] * x[1] - b * x[2];
            }
            ModelKind::Linear => {
                let m = self.matrix.as_ref().expect("linear model carries a matrix");
                for (o, row) in out.iter_mut().zip(m) {
                    *o = linalg::dot(row, x);
                }
            }
            ModelKind::Polynomial => {
                out.iter_mut().for_each(|o| *o = 0.0);
                for t in &self.terms {
                    let mut v = t.coeff;
                    for (xi, &e) in x.iter().zip(&t.exponents) {
                        if e > 0 {
                            v *= xi.powi(e as i32);
                        }
                    }
                    out[t.target] += v;
                }
            }
            ModelKind::Product => {
                let (w, k) = (param(&self.params, "omega"), param(&self.params, "kappa"));
                out[0] = -w * x[1];
                out[1] = w * x[0];
                out[2] = -k * x[2];
            }
        }
        if let Some(b) = &self.additive {
            for (o, row) in out.iter_mut().zip(b) {
                *o += linalg::dot(row, x);
            }
        }
        if self.reversed {
            out.iter_mut().for_each(|o| *o = -*o);
        }
    }

    /// Writes DG(x) row-major into `out` (length dim²) without dimension checks.
    pub fn jacobian_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        match self.kind {
            ModelKind::Lorenz => {
                let (s, r, b) = (
                    param(&self.params, "sigma"),
                    param(&self.params, "rho"),
                    param(&self.params, "beta"),
                );
                out.copy_from_slice(&[-s, s, 0.0, r - x[2], -1.0, -x[0], x[1], x[0], -b]);
            }
            ModelKind::Linear => {
                let m = self.matrix.as_ref().expect("linear model carries a matrix");
                for (i, row) in m.iter().enumerate() {
                    out[i * d..(i + 1) * d].copy_from_slice(row);
                }
            }
            ModelKind::Polynomial => {
                out.iter_mut().for_each(|o| *o = 0.0);
                for t in &self.terms {
                    for k in 0..d {
                        let ek = t.exponents[k];
                        if ek == 0 {
                            continue;
                        }
                        let mut v = t.coeff * ek as f64;
                        for (i, (&xi, &e)) in x.iter().zip(&t.exponents).enumerate() {
                            let p = if i == k { e - 1 } else { e };
                            if p > 0 {
                                v *= xi.powi(p as i32);
                            }
                        }
                        out[t.target * d + k] += v;
                    }
                }
            }
            ModelKind::Product => {
                let (w, k) = (param(&self.params, "omega"), param(&self.params, "kappa"));
                out.copy_from_slice(&[0.0, -w, 0.0, w, 0.0, 0.0, 0.0, 0.0, -k]);
            }
        }
        if let Some(b) = &self.additive {
            for (i, row) in b.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    out[i * d + j] += v;
                }
            }
        }
        if self.reversed {
            out.iter_mut().for_each(|o| *o = -*o);
        }
    }

    pub fn eval_field(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, &mut out);
        Ok(out)
    }

    pub fn eval_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        let mut buf = vec![0.0; self.dim * self.dim];
        self.jacobian_into(x, &mut buf);
        Ok(DMatrix::from_row_slice(self.dim, self.dim, &buf))
    }

    /// Central-difference Jacobian with step max(1e-6, 1e-6·|x_i|).
    pub fn jacobian_fd(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        let d = self.dim;
        let mut jac = DMatrix::zeros(d, d);
        let mut xp = x.to_vec();
        let (mut fp, mut fm) = (vec![0.0; d], vec![0.0; d]);
        for k in 0..d {
            let h = (1e-6 * x[k].abs()).max(1e-6);
            xp[k] = x[k] + h;
            self.eval_into(&xp, &mut fp);
            xp[k] = x[k] - h;
            self.eval_into(&xp, &mut fm);
            xp[k] = x[k];
            for i in 0..d {
                jac[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        Ok(jac)
    }

    pub fn divergence(&self, x: &[f64]) -> Result<f64> {
        Ok(self.eval_jacobian(x)?.trace())
    }

    /// Largest operator norm of DG over 1000 Halton points of [−1,1]^d.
    pub fn field_scale(&self) -> f64 {
        let mut buf = vec![0.0; self.dim * self.dim];
        (0..1000)
            .map(|i| {
                let x: Vec<f64> = rng::halton(i, self.dim)
                    .iter()
                    .map(|u| 2.0 * u - 1.0)
                    .collect();
                self.jacobian_into(&x, &mut buf);
                linalg::spectral_norm(&DMatrix::from_row_slice(self.dim, self.dim, &buf))
            })
            .fold(0.0, f64::max)
    }

    /// Seeded perturbation; magnitude 0 returns an identical model.
    pub fn perturb(&self, p: &Perturbation) -> Result<Self> {
        let m = p.relative_magnitude;
        if !(0.0..0.5).contains(&m) {
            return Err(Error::Input(format!(
                "perturbation magnitude {m} outside [0, 0.5)"
            )));
        }
        if m == 0.0 {
            return Ok(self.clone());
        }
        let mut out = self.clone();
        let mut rng = rng::seeded(p.seed);
        match p.mode {
            PerturbationMode::ParameterScale => {
                for v in out.params.values_mut() {
                    *v *= 1.0 + rng.random_range(-m..=m);
                }
                if let Some(mat) = out.matrix.as_mut() {
                    for v in mat.iter_mut().flatten() {
                        *v *= 1.0 + rng.random_range(-m..=m);
                    }
                }
                for t in out.terms.iter_mut() {
                    t.coeff *= 1.0 + rng.random_range(-m..=m);
                }
            }
            PerturbationMode::AdditiveLinear => {
                let d = self.dim;
                let a = DMatrix::from_fn(d, d, |_, _| rng::normal(&mut rng));
                let a = &a / linalg::spectral_norm(&a);
                let eps = m * self.field_scale();
                let mut b = self
                    .additive
                    .clone()
                    .unwrap_or_else(|| vec![vec![0.0; d]; d]);
                for i in 0..d {
                    for j in 0..d {
                        b[i][j] += eps * a[(i, j)];
                    }
                }
                out.additive = Some(b);
            }
        }
        out.id = format!("{}~{:?}({m},seed={})", self.id, p.mode, p.seed);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn lorenz_values() {
        let m = VectorFieldModel::lorenz_classic();
        assert_eq!(m.eval_field(&[0.0, 0.0, 0.0]).unwrap(), vec![0.0, 0.0, 0.0]);
        let g = m.eval_field(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(g[0], 0.0);
        assert_eq!(g[1], 26.0);
        assert!((g[2] + 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn linear_values() {
        let m = VectorFieldModel::diagonal(&[-1.0, 2.0]);
        assert_eq!(m.eval_field(&[3.0, 1.0]).unwrap(), vec![-3.0, 2.0]);
        assert_eq!(
            m.eval_jacobian(&[5.0, -7.0]).unwrap(),
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 2.0])
        );
        assert_eq!(m.divergence(&[0.3, 0.1]).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch_is_input_error() {
        let m = VectorFieldModel::lorenz_classic();
        assert!(matches!(m.eval_field(&[1.0, 2.0]), Err(Error::Input(_))));
        assert!(matches!(m.eval_jacobian(&[1.0]), Err(Error::Input(_))));
        assert!(matches!(
            m.divergence(&[1.0, 2.0, 3.0, 4.0]),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn lorenz_jacobian_entries() {
        let m = VectorFieldModel::lorenz_classic();
        let j0 = m.eval_jacobian(&[0.0, 0.0, 0.0]).unwrap();
        let b = 8.0 / 3.0;
        let expect =
            DMatrix::from_row_slice(3, 3, &[-10.0, 10.0, 0.0, 28.0, -1.0, 0.0, 0.0, 0.0, -b]);
        assert_eq!(j0, expect);
        let j1 = m.eval_jacobian(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(j1[(1, 2)], -1.0);
        assert!((m.divergence(&[3.0, -2.0, 40.0]).unwrap() + 41.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn polynomial_divergence() {
        // ẋ = x², ẏ = −y
        let m = VectorFieldModel::polynomial(
            2,
            vec![
                PolyTerm::from((0, 1.0, vec![2, 0])),
                PolyTerm::from((1, -1.0, vec![0, 1])),
            ],
        )
        .unwrap();
        assert_eq!(m.divergence(&[2.0, 5.0]).unwrap(), 3.0);
    }

    #[test]
    fn json_configs_parse() {
        let m = VectorFieldModel::from_json(
            r#"{"kind":"lorenz","params":{"sigma":10,"rho":28,"beta":2.6666666666666665}}"#,
        )
        .unwrap();
        assert_eq!(m.dim, 3);
        let p = VectorFieldModel::from_json(
            r#"{"kind":"polynomial","dim":3,"terms":[[0, 1.0, [1,0,0]], [2, -2.5, [0,1,1]]]}"#,
        )
        .unwrap();
        assert_eq!(p.terms.len(), 2);
        assert_eq!(
            p.eval_field(&[1.0, 2.0, 3.0]).unwrap(),
            vec![1.0, 0.0, -15.0]
        );
        assert!(VectorFieldModel::from_json(r#"{"kind":"lorenz","params":{"sigma":10}}"#).is_err());
        assert!(VectorFieldModel::from_json(
            r#"{"kind":"polynomial","dim":2,"terms":[[5,1.0,[1,0]]]}"#
        )
        .is_err());
        assert!(VectorFieldModel::from_json("not json").is_err());
    }

    #[test]
    fn reversal_negates() {
        let m = VectorFieldModel::lorenz_classic();
        let r = m.reversed();
        let x = [1.0, 2.0, 3.0];
        let g = m.eval_field(&x).unwrap();
        let gr = r.eval_field(&x).unwrap();
        for i in 0..3 {
            assert_eq!(g[i], -gr[i]);
        }
        assert_eq!(r.reversed(), m);
    }

    #[test]
    fn zero_perturbation_is_identity() {
        let m = VectorFieldModel::lorenz_classic();
        for mode in [
            PerturbationMode::ParameterScale,
            PerturbationMode::AdditiveLinear,
        ] {
            let p = m
                .perturb(&Perturbation {
                    relative_magnitude: 0.0,
                    seed: 99,
                    mode,
                })
                .unwrap();
            assert_eq!(p, m);
        }
    }

    #[test]
    fn parameter_scale_bounds_and_replay() {
        let m = VectorFieldModel::lorenz_classic();
        let p = Perturbation {
            relative_magnitude: 0.02,
            seed: 5,
            mode: PerturbationMode::ParameterScale,
        };
        let a = m.perturb(&p).unwrap();
        let b = m.perturb(&p).unwrap();
        for (k, v) in &a.params {
            let orig = m.params[k];
            assert!((v / orig - 1.0).abs() <= 0.02 + 1e-15);
            assert_eq!(v.to_bits(), b.params[k].to_bits());
        }
        assert!(m
            .perturb(&Perturbation {
                relative_magnitude: 0.5,
                ..p
            })
            .is_err());
        assert!(m
            .perturb(&Perturbation {
                relative_magnitude: -0.1,
                ..p
            })
            .is_err());
    }

    #[test]
    fn additive_linear_bound() {
        let m = VectorFieldModel::lorenz_classic();
        let p = Perturbation {
            relative_magnitude: 0.01,
            seed: 17,
            mode: PerturbationMode::AdditiveLinear,
        };
        let q = m.perturb(&p).unwrap();
        let scale = m.field_scale();
        let mut r = rng::seeded(3);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..3).map(|_| r.random_range(-30.0..30.0)).collect();
            let diff = linalg::dist(&q.eval_field(&x).unwrap(), &m.eval_field(&x).unwrap());
            assert!(diff <= 0.01 * scale * linalg::norm(&x) * (1.0 + 1e-12));
        }
    }

    fn models() -> Vec<VectorFieldModel> {
        vec![
            VectorFieldModel::lorenz_classic(),
            VectorFieldModel::diagonal(&[-2.0, 1.0, 3.0]),
            VectorFieldModel::center_contraction(1.0, 1.0),
            VectorFieldModel::polynomial(
                3,
                vec![
                    PolyTerm::from((0, 1.5, vec![2, 1, 0])),
                    PolyTerm::from((1, -0.5, vec![0, 0, 3])),
                    PolyTerm::from((2, 2.0, vec![1, 1, 1])),
                    PolyTerm::from((2, -1.0, vec![0, 0, 1])),
                ],
            )
            .unwrap(),
        ]
    }

    proptest! {
        #[test]
        fn analytic_jacobian_matches_central_differences(
            x in proptest::collection::vec(-20.0f64..20.0, 3)
        ) {
            for m in models() {
                let ja = m.eval_jacobian(&x).unwrap();
                let jf = m.jacobian_fd(&x).unwrap();
                let err = linalg::frobenius(&(&ja - &jf));
                let scale = linalg::frobenius(&ja).max(1.0);
                prop_assert!(err / scale < 1e-5, "{}: rel err {}", m.id, err / scale);
            }
        }

        #[test]
        fn divergence_is_jacobian_trace(x in proptest::collection::vec(-50.0f64..50.0, 3)) {
            for m in models() {
                prop_assert_eq!(m.divergence(&x).unwrap(), m.eval_jacobian(&x).unwrap().trace());
            }
        }
    }
}
