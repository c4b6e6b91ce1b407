//! Cross-sections, first-return maps, return-time blow-up near singular
//! orbits, and distances between in-section stable leaves.

mod leaves;
mod returns;
mod roof;

pub use leaves::{
    growth_batch, leaf_direction, leaf_separation_growth, quotient_expansion, stable_leaf_distance,
    stable_leaf_distance_with, unstable_in_section_direction, Alignment, GrowthBatch,
    GrowthOptions, GrowthSeries, LeafDistance, QuotientOptions, QuotientReport, LEAF_NOISE_FLOOR,
};
pub use returns::{
    first_return, first_return_with, iterate_returns, records_csv, section_crossings, MissReason,
    ReturnOptions, ReturnRecord,
};
pub use roof::{roof_fit, RoofFit, RoofOptions, RoofSample, BOUNDED_REGIME};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::model::VectorFieldModel;

/// Fraction of the section box that counts as the inner subsection.
pub const INNER_FRACTION: f64 = 0.75;

/// Section definition as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionConfig {
    #[serde(default)]
    pub id: Option<String>,
    pub point: Vec<f64>,
    #[serde(default)]
    pub normal: Option<Vec<f64>>,
    pub half_widths: Vec<f64>,
    #[serde(default)]
    pub orientation: i8,
}

/// Flat box transverse to the flow.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSection {
    pub id: String,
    pub point: Vec<f64>,
    pub normal: Vec<f64>,
    /// d×(d−1) orthonormal in-plane frame.
    pub frame: DMatrix<f64>,
    pub half_widths: Vec<f64>,
    /// +1: count crossings along the normal, −1: against it, 0: both.
    pub orientation: i8,
    pub inner_fraction: f64,
}

impl CrossSection {
    pub fn dim(&self) -> usize {
        self.point.len()
    }

    /// ⟨x − y, n⟩.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.point)
            .zip(&self.normal)
            .map(|((a, b), n)| (a - b) * n)
            .sum()
    }

    pub fn coords(&self, x: &[f64]) -> Vec<f64> {
        let v = DVector::from_iterator(x.len(), x.iter().zip(&self.point).map(|(a, b)| a - b));
        (self.frame.transpose() * v).as_slice().to_vec()
    }

    pub fn from_coords(&self, c: &[f64]) -> Vec<f64> {
        let v = &self.frame * DVector::from_column_slice(c);
        self.point
            .iter()
            .zip(v.iter())
            .map(|(a, b)| a + b)
            .collect()
    }

    pub fn in_box(&self, x: &[f64]) -> bool {
        self.coords(x)
            .iter()
            .zip(&self.half_widths)
            .all(|(c, h)| c.abs() <= *h)
    }

    pub fn in_inner(&self, x: &[f64]) -> bool {
        self.coords(x)
            .iter()
            .zip(&self.half_widths)
            .all(|(c, h)| c.abs() <= self.inner_fraction * h)
    }

    /// Projects `x` onto the plane along the normal.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let s = self.signed_distance(x);
        x.iter().zip(&self.normal).map(|(a, n)| a - s * n).collect()
    }

    pub fn config(&self) -> SectionConfig {
        SectionConfig {
            id: Some(self.id.clone()),
            point: self.point.clone(),
            normal: Some(self.normal.clone()),
            half_widths: self.half_widths.clone(),
            orientation: self.orientation,
        }
    }
}

/// Orthonormal basis of the hyperplane ⟂ n, built from the coordinate axes
/// least aligned with n so that axis-aligned planes get axis-aligned frames.
fn plane_frame(n: &[f64]) -> DMatrix<f64> {
    let d = n.len();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| n[a].abs().total_cmp(&n[b].abs()).then(a.cmp(&b)));
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(d - 1);
    let nv = DVector::from_column_slice(n);
    for &i in &order {
        if cols.len() == d - 1 {
            break;
        }
        let mut v = DVector::zeros(d);
        v[i] = 1.0;
        for _ in 0..2 {
            let c = nv.dot(&v);
            v.axpy(-c, &nv, 1.0);
            for q in &cols {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let nn = v.norm();
        if nn > 1e-8 {
            cols.push(v / nn);
        }
    }
    let mut f = DMatrix::zeros(d, d - 1);
    for (k, c) in cols.iter().enumerate() {
        f.set_column(k, c);
    }
    f
}

/// Builds a section through `y`; the normal defaults to the flow direction.
pub fn make_section(
    y: &[f64],
    model: &VectorFieldModel,
    half_widths: &[f64],
    orientation: i8,
    normal: Option<&[f64]>,
    id: &str,
) -> Result<CrossSection> {
    let d = model.dim;
    if d < 2 {
        return Err(Error::Precondition(
            "sections need dimension at least 2".into(),
        ));
    }
    if y.len() != d || half_widths.len() != d - 1 {
        return Err(Error::Input(format!(
            "section needs a point in R^{d} and {} half-widths",
            d - 1
        )));
    }
    if half_widths.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::Input("half-widths must be positive".into()));
    }
    if ![-1, 0, 1].contains(&orientation) {
        return Err(Error::Input("orientation must be -1, 0 or 1".into()));
    }
    let g = model.eval_field(y)?;
    let gn = norm(&g);
    if !(gn > 1e-8) {
        return Err(Error::Precondition(format!(
            "section base point is an equilibrium (‖G‖ = {gn:e})"
        )));
    }
    let n: Vec<f64> = match normal {
        Some(n) => {
            if n.len() != d {
                return Err(Error::Input("normal has wrong dimension".into()));
            }
            let nn = norm(n);
            if !(nn > 0.0) {
                return Err(Error::Input("normal must be non-zero".into()));
            }
            n.iter().map(|v| v / nn).collect()
        }
        None => g.iter().map(|v| v / gn).collect(),
    };
    if !(dot(&g, &n).abs() / gn > 1e-6) {
        return Err(Error::Precondition(
            "flow is tangent to the section at its base point".into(),
        ));
    }
    Ok(CrossSection {
        id: id.to_string(),
        point: y.to_vec(),
        frame: plane_frame(&n),
        normal: n,
        half_widths: half_widths.to_vec(),
        orientation,
        inner_fraction: INNER_FRACTION,
    })
}

pub fn section_from_config(
    cfg: &SectionConfig,
    model: &VectorFieldModel,
    index: usize,
) -> Result<CrossSection> {
    let id = cfg.id.clone().unwrap_or_else(|| format!("s{index}"));
    make_section(
        &cfg.point,
        model,
        &cfg.half_widths,
        cfg.orientation,
        cfg.normal.as_deref(),
        &id,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flow_orthogonal_section_at_lorenz_axis_point() {
        let m = VectorFieldModel::lorenz_classic();
        let s = make_section(&[0.0, 0.0, 27.0], &m, &[5.0, 5.0], 0, None, "a").unwrap();
        assert!((s.normal[2] + 1.0).abs() < 1e-15);
        for c in 0..2 {
            assert!(
                s.frame
                    .column(c)
                    .dot(&DVector::from_column_slice(&s.normal))
                    .abs()
                    < 1e-12
            );
        }
    }

    #[test]
    fn classical_plane_has_axis_frame() {
        let m = VectorFieldModel::lorenz_classic();
        let s = make_section(
            &[0.0, 0.0, 27.0],
            &m,
            &[20.0, 20.0],
            1,
            Some(&[0.0, 0.0, 1.0]),
            "z27",
        )
        .unwrap();
        assert_eq!(s.coords(&[3.0, -4.0, 27.0]), vec![3.0, -4.0]);
        assert!(s.in_inner(&[14.9, -14.9, 27.0]));
        assert!(!s.in_inner(&[15.1, 0.0, 27.0]));
        assert!(s.in_box(&[15.1, 0.0, 27.0]));
        assert_eq!(s.from_coords(&[1.0, 2.0]), vec![1.0, 2.0, 27.0]);
    }

    #[test]
    fn equilibrium_base_is_rejected() {
        let m = VectorFieldModel::lorenz_classic();
        assert!(matches!(
            make_section(&[0.0; 3], &m, &[1.0, 1.0], 0, None, "x"),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn config_parses() {
        let cfg: SectionConfig = serde_json::from_str(
            r#"{"point":[0,0,27],"normal":[0,0,1],"half_widths":[20,20],"orientation":1}"#,
        )
        .unwrap();
        assert_eq!(cfg.orientation, 1);
        let m = VectorFieldModel::lorenz_classic();
        let s = section_from_config(&cfg, &m, 0).unwrap();
        assert_eq!(s.id, "s0");
    }
}
