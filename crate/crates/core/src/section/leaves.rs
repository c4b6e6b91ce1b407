use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::returns::{first_return_with, section_crossings, ReturnOptions, ReturnRecord};
use super::CrossSection;
use crate::error::{Error, Result};
use crate::linalg::{complement, dist, median, percentile, qr_positive, top_eigenvectors};
use crate::model::VectorFieldModel;
use crate::rng::{child_seed, seeded, unit_vector};
use crate::splitting::{stable_subspace, DEFAULT_T_EST, LOW_CONFIDENCE_GAP};

/// Leaf distances below this are treated as numerical noise when forming growth factors.
pub const LEAF_NOISE_FLOOR: f64 = 1e-7;

/// Points farther than this from the plane do not count as on the section.
const ON_SECTION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafDistance {
    pub distance: f64,
    pub low_confidence: bool,
}

/// In-section stable directions at `x`: E_s projected into the plane along
/// the flow, orthonormalized (d×d_s).
pub fn leaf_direction(
    model: &VectorFieldModel,
    section: &CrossSection,
    x: &[f64],
    d_s: usize,
    t_est: f64,
    tol: f64,
) -> Result<(DMatrix<f64>, bool)> {
    let (e_s, gap) = stable_subspace(model, x, d_s, t_est, tol)?;
    let g = DVector::from_vec(model.eval_field(x)?);
    let n = DVector::from_column_slice(&section.normal);
    let gn = g.dot(&n);
    if gn.abs() < 1e-12 {
        return Err(Error::Degeneracy("flow is tangent to the section".into()));
    }
    let mut p = e_s.clone();
    for c in 0..d_s {
        let v = e_s.column(c);
        let a = v.dot(&n) / gn;
        p.set_column(c, &(v - &g * a));
    }
    let (q, _) = qr_positive(&p)?;
    Ok((q, !(gap >= LOW_CONFIDENCE_GAP)))
}

/// Unit in-section direction orthogonal to the leaf directions `leaf`.
pub fn unstable_in_section_direction(section: &CrossSection, leaf: &DMatrix<f64>) -> DVector<f64> {
    let lc = section.frame.transpose() * leaf;
    let (q, _) = qr_positive(&lc)
        .unwrap_or_else(|_| (lc.clone(), DMatrix::identity(lc.ncols(), lc.ncols())));
    let comp = complement(&q);
    &section.frame * comp.column(0)
}

fn check_on(section: &CrossSection, x: &[f64]) -> Result<()> {
    if section.signed_distance(x).abs() > ON_SECTION || !section.in_box(x) {
        return Err(Error::Precondition(format!(
            "point is not in section {}",
            section.id
        )));
    }
    Ok(())
}

fn leaf_distance_from(lx: &DMatrix<f64>, ly: &DMatrix<f64>, x: &[f64], y: &[f64]) -> f64 {
    let k = lx.ncols();
    // averaging the two projectors keeps the result symmetric in (x, y)
    let s = (lx * lx.transpose() + ly * ly.transpose()) * 0.5;
    let l = top_eigenvectors(&s, k);
    let v = DVector::from_iterator(x.len(), y.iter().zip(x).map(|(a, b)| a - b));
    let r = &v - &l * (l.transpose() * &v);
    r.norm()
}

/// Distance between the affine in-section stable leaves through x and y,
/// using a common leaf direction averaged between the two points.
pub fn stable_leaf_distance(
    section: &CrossSection,
    x: &[f64],
    y: &[f64],
    model: &VectorFieldModel,
    d_s: usize,
) -> Result<LeafDistance> {
    stable_leaf_distance_with(section, x, y, model, d_s, DEFAULT_T_EST, 1e-9)
}

pub fn stable_leaf_distance_with(
    section: &CrossSection,
    x: &[f64],
    y: &[f64],
    model: &VectorFieldModel,
    d_s: usize,
    t_est: f64,
    tol: f64,
) -> Result<LeafDistance> {
    check_on(section, x)?;
    check_on(section, y)?;
    if d_s + 1 > section.dim() - 1 {
        return Err(Error::Precondition(
            "leaves must have codimension at least one in the section".into(),
        ));
    }
    let (lx, cx) = leaf_direction(model, section, x, d_s, t_est, tol)?;
    let (ly, cy) = if x == y {
        (lx.clone(), cx)
    } else {
        leaf_direction(model, section, y, d_s, t_est, tol)?
    };
    Ok(LeafDistance {
        distance: leaf_distance_from(&lx, &ly, x, y),
        low_confidence: cx || cy,
    })
}

#[derive(Debug, Clone)]
pub struct GrowthOptions {
    pub d_s: usize,
    pub delta_sep: f64,
    pub noise_floor: f64,
    pub returns: ReturnOptions,
    pub t_est: f64,
    /// Time window per unit of current leaf distance within which two
    /// neighbour returns make the pairing ambiguous.
    pub pairing_window: f64,
}

impl Default for GrowthOptions {
    fn default() -> Self {
        GrowthOptions {
            d_s: 1,
            delta_sep: 1.0,
            noise_floor: LEAF_NOISE_FLOOR,
            returns: ReturnOptions::default(),
            t_est: DEFAULT_T_EST,
            pairing_window: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthSeries {
    /// Leaf distance before the first return and after each paired return.
    pub distances: Vec<f64>,
    /// Ratio of consecutive distances, each clamped below by the noise floor.
    pub factors: Vec<f64>,
    pub median_factor: Option<f64>,
    pub separated: bool,
    pub delta_sep: f64,
    /// Why the series ended early, when it did.
    pub truncated: Option<String>,
    pub return_times: Vec<(f64, f64)>,
    pub low_confidence: bool,
}

fn locate(sections: &[CrossSection], x: &[f64]) -> Option<usize> {
    sections
        .iter()
        .position(|s| s.signed_distance(x).abs() <= ON_SECTION && s.in_box(x))
}

/// Return of `y` paired with the return `rx` of its neighbour: among the next
/// two returns of `y` on the same section with the same crossing sign, the one
/// nearest in accumulated time. Two candidates within `window` of the reference
/// return time are ambiguous.
fn paired_return(
    model: &VectorFieldModel,
    sections: &[CrossSection],
    y: &[f64],
    rx: &ReturnRecord,
    window: f64,
    opts: &GrowthOptions,
) -> Result<std::result::Result<ReturnRecord, &'static str>> {
    let tau_x = rx.tau.unwrap();
    let same_kind =
        |r: &ReturnRecord| r.exit_index == rx.exit_index && r.crossing_sign == rx.crossing_sign;
    let r1 = first_return_with(model, sections, y, &opts.returns)?;
    if r1.miss {
        return Ok(Err("neighbour missed the sections"));
    }
    let t1 = r1.tau.unwrap();
    let mut candidates = Vec::new();
    if same_kind(&r1) {
        candidates.push((t1, r1.clone()));
    }
    if t1 < tau_x + window {
        let r2 = first_return_with(model, sections, r1.rx.as_ref().unwrap(), &opts.returns)?;
        if !r2.miss && same_kind(&r2) {
            let t2 = t1 + r2.tau.unwrap();
            let mut r = r2;
            r.tau = Some(t2);
            r.x = y.to_vec();
            candidates.push((t2, r));
        }
    }
    if candidates
        .iter()
        .filter(|(t, _)| (t - tau_x).abs() <= window)
        .count()
        > 1
    {
        return Ok(Err("ambiguous neighbour returns inside the pairing window"));
    }
    Ok(candidates
        .into_iter()
        .min_by(|a, b| (a.0 - tau_x).abs().total_cmp(&(b.0 - tau_x).abs()))
        .map(|(_, r)| r)
        .ok_or("no neighbour return on the matching section"))
}

/// Follows a pair of section points through successive returns and records
/// how the distance between their stable leaves evolves.
pub fn leaf_separation_growth(
    model: &VectorFieldModel,
    sections: &[CrossSection],
    x: &[f64],
    y: &[f64],
    n_returns: usize,
    opts: &GrowthOptions,
) -> Result<GrowthSeries> {
    let jx =
        locate(sections, x).ok_or_else(|| Error::Precondition("x is not on a section".into()))?;
    let jy =
        locate(sections, y).ok_or_else(|| Error::Precondition("y is not on a section".into()))?;
    if jx != jy {
        return Err(Error::Precondition(
            "x and y lie on different sections".into(),
        ));
    }
    let tol = opts.returns.tol;
    let d0 = stable_leaf_distance_with(&sections[jx], x, y, model, opts.d_s, opts.t_est, tol)?;
    if !(d0.distance < 0.1) {
        return Err(Error::Precondition(format!(
            "initial leaf distance {} is not below 0.1",
            d0.distance
        )));
    }
    let mut series = GrowthSeries {
        distances: vec![d0.distance],
        factors: Vec::new(),
        median_factor: None,
        separated: false,
        delta_sep: opts.delta_sep,
        truncated: None,
        return_times: Vec::new(),
        low_confidence: d0.low_confidence,
    };
    let (mut xc, mut yc) = (x.to_vec(), y.to_vec());
    for _ in 0..n_returns {
        if *series.distances.last().unwrap() > opts.delta_sep {
            series.separated = true;
            break;
        }
        let rx = first_return_with(model, sections, &xc, &opts.returns)?;
        if rx.miss {
            series.truncated = Some("orbit missed the sections".into());
            break;
        }
        let ry = if xc == yc {
            Ok(rx.clone())
        } else {
            let window = opts.pairing_window * series.distances.last().unwrap();
            paired_return(model, sections, &yc, &rx, window, opts)?
        };
        let ry = match ry {
            Ok(r) => r,
            Err(why) => {
                series.truncated = Some(why.into());
                break;
            }
        };
        let sec = &sections[rx.exit_index.unwrap()];
        let (px, py) = (rx.rx.clone().unwrap(), ry.rx.clone().unwrap());
        let dd = stable_leaf_distance_with(sec, &px, &py, model, opts.d_s, opts.t_est, tol)?;
        series.low_confidence |= dd.low_confidence;
        let prev = *series.distances.last().unwrap();
        series
            .factors
            .push(dd.distance.max(opts.noise_floor) / prev.max(opts.noise_floor));
        series.distances.push(dd.distance);
        series.return_times.push((rx.tau.unwrap(), ry.tau.unwrap()));
        xc = px;
        yc = py;
    }
    if !series.separated && *series.distances.last().unwrap() > opts.delta_sep {
        series.separated = true;
    }
    if !series.factors.is_empty() {
        series.median_factor = Some(median(&series.factors));
    }
    Ok(series)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthBatch {
    pub pairs: usize,
    pub offset: f64,
    pub n_returns: usize,
    /// Median of every per-return factor over all series.
    pub median_factor: f64,
    /// Series whose leaf distance exceeded `delta_sep`.
    pub separated: usize,
    pub delta_sep: f64,
    pub series: Vec<GrowthSeries>,
}

/// Leaf-separation series for `n_pairs` section crossings of one orbit, each
/// paired with a neighbour displaced by `offset` across the stable leaves.
pub fn growth_batch(
    model: &VectorFieldModel,
    sections: &[CrossSection],
    seed_point: &[f64],
    transient: f64,
    n_pairs: usize,
    offset: f64,
    n_returns: usize,
    opts: &GrowthOptions,
) -> Result<GrowthBatch> {
    if !(offset > 0.0 && offset < 0.1) {
        return Err(Error::Precondition(
            "pair offset must lie in (0, 0.1)".into(),
        ));
    }
    let pts = section_crossings(
        model,
        sections,
        seed_point,
        transient,
        n_pairs,
        &opts.returns,
    )?;
    let series = pts
        .par_iter()
        .map(|p| {
            let j = locate(sections, p)
                .ok_or_else(|| Error::Numeric("crossing left the section".into()))?;
            let sec = &sections[j];
            let (leaf, _) = leaf_direction(model, sec, p, opts.d_s, opts.t_est, opts.returns.tol)?;
            let u = unstable_in_section_direction(sec, &leaf);
            let y: Vec<f64> = p
                .iter()
                .zip(u.iter())
                .map(|(a, b)| a + offset * b)
                .collect();
            leaf_separation_growth(model, sections, p, &y, n_returns, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let factors: Vec<f64> = series
        .iter()
        .flat_map(|s| s.factors.iter().copied())
        .collect();
    if factors.is_empty() {
        return Err(Error::InsufficientData("no growth factors recorded".into()));
    }
    Ok(GrowthBatch {
        pairs: series.len(),
        offset,
        n_returns,
        median_factor: median(&factors),
        separated: series.iter().filter(|s| s.separated).count(),
        delta_sep: opts.delta_sep,
        series,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alignment {
    /// Offsets across the leaves; factors measure leaf-distance growth.
    Unstable,
    /// Offsets along the leaves; factors are Euclidean distance ratios.
    Stable,
}

#[derive(Debug, Clone)]
pub struct QuotientOptions {
    pub d_s: usize,
    pub offset: f64,
    pub alignment: Alignment,
    pub seed_point: Vec<f64>,
    pub transient: f64,
    pub growth: GrowthOptions,
}

impl QuotientOptions {
    pub fn new(seed_point: Vec<f64>) -> Self {
        QuotientOptions {
            d_s: 1,
            offset: 1e-5,
            alignment: Alignment::Unstable,
            seed_point,
            transient: 50.0,
            growth: GrowthOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotientReport {
    pub alignment: Alignment,
    pub pairs_requested: usize,
    pub pairs_used: usize,
    pub offset: f64,
    /// 5th percentile of the expansion factors.
    pub mu_hat: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub factors: Vec<f64>,
    pub rejected: usize,
}

fn quotient_pair(
    model: &VectorFieldModel,
    sections: &[CrossSection],
    x: &[f64],
    opts: &QuotientOptions,
) -> Result<Option<f64>> {
    let j = locate(sections, x)
        .ok_or_else(|| Error::Precondition("base point is not on a section".into()))?;
    let sec = &sections[j];
    let g = &opts.growth;
    let tol = g.returns.tol;
    let (leaf, _) = leaf_direction(model, sec, x, opts.d_s, g.t_est, tol)?;
    let dir = match opts.alignment {
        Alignment::Unstable => unstable_in_section_direction(sec, &leaf),
        Alignment::Stable => leaf.column(0).into_owned(),
    };
    let y: Vec<f64> = x
        .iter()
        .zip(dir.iter())
        .map(|(a, b)| a + opts.offset * b)
        .collect();
    if !sec.in_box(&y) {
        return Ok(None);
    }
    let rx = first_return_with(model, sections, x, &g.returns)?;
    if rx.miss {
        return Ok(None);
    }
    let ry = match paired_return(model, sections, &y, &rx, g.pairing_window * opts.offset, g)? {
        Ok(r) => r,
        Err(_) => return Ok(None),
    };
    let (px, py) = (rx.rx.unwrap(), ry.rx.unwrap());
    let f = match opts.alignment {
        Alignment::Unstable => {
            let d0 = stable_leaf_distance_with(sec, x, &y, model, opts.d_s, g.t_est, tol)?.distance;
            let s1 = &sections[rx.exit_index.unwrap()];
            let d1 =
                stable_leaf_distance_with(s1, &px, &py, model, opts.d_s, g.t_est, tol)?.distance;
            d1 / d0
        }
        Alignment::Stable => dist(&px, &py) / dist(x, &y),
    };
    Ok(if f.is_finite() { Some(f) } else { None })
}

/// Finite-difference expansion of the return map induced on stable leaves,
/// over `n_pairs` base points taken from section crossings of one orbit.
pub fn quotient_expansion(
    model: &VectorFieldModel,
    sections: &[CrossSection],
    n_pairs: usize,
    seed: u64,
    opts: &QuotientOptions,
) -> Result<QuotientReport> {
    if !(opts.offset > 0.0) {
        return Err(Error::Precondition("pair offset must be positive".into()));
    }
    if n_pairs == 0 {
        return Err(Error::Precondition("need at least one pair".into()));
    }
    let mut rng = seeded(child_seed(seed, 0x9a0, 0));
    let u = unit_vector(&mut rng, model.dim);
    let start: Vec<f64> = opts
        .seed_point
        .iter()
        .zip(&u)
        .map(|(a, b)| a + 1e-3 * b)
        .collect();
    let base = section_crossings(
        model,
        sections,
        &start,
        opts.transient,
        n_pairs,
        &opts.growth.returns,
    )?;
    let res: Vec<Result<Option<f64>>> = base
        .par_iter()
        .map(|x| quotient_pair(model, sections, x, opts))
        .collect();
    let mut factors = Vec::new();
    let mut rejected = 0;
    for r in res {
        match r {
            Ok(Some(f)) => factors.push(f),
            Ok(None) => rejected += 1,
            Err(e) if e.is_numeric() => rejected += 1,
            Err(e) => return Err(e),
        }
    }
    if factors.len() < (n_pairs / 2).max(1) {
        return Err(Error::InsufficientData(format!(
            "only {} of {n_pairs} pairs were usable",
            factors.len()
        )));
    }
    Ok(QuotientReport {
        alignment: opts.alignment,
        pairs_requested: n_pairs,
        pairs_used: factors.len(),
        offset: opts.offset,
        mu_hat: percentile(&factors, 5.0),
        median: median(&factors),
        min: factors.iter().cloned().fold(f64::INFINITY, f64::min),
        max: factors.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        factors,
        rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{make_section, section_crossings};
    use super::*;

    fn setup() -> (VectorFieldModel, Vec<CrossSection>, Vec<Vec<f64>>) {
        let m = VectorFieldModel::lorenz_classic();
        let s = make_section(
            &[0.0, 0.0, 27.0],
            &m,
            &[20.0, 20.0],
            0,
            Some(&[0.0, 0.0, 1.0]),
            "z27",
        )
        .unwrap();
        let secs = vec![s];
        let pts = section_crossings(
            &m,
            &secs,
            &[1.0, 1.0, 1.0],
            30.0,
            8,
            &ReturnOptions::default(),
        )
        .unwrap();
        (m, secs, pts)
    }

    #[test]
    fn leaf_distance_basics() {
        let (m, secs, pts) = setup();
        let s = &secs[0];
        let x = &pts[2];
        assert_eq!(stable_leaf_distance(s, x, x, &m, 1).unwrap().distance, 0.0);
        let (leaf, _) = leaf_direction(&m, s, x, 1, 2.0, 1e-9).unwrap();
        let on: Vec<f64> = x
            .iter()
            .zip(leaf.column(0).iter())
            .map(|(a, b)| a + 1e-4 * b)
            .collect();
        assert!(stable_leaf_distance(s, x, &on, &m, 1).unwrap().distance < 1e-6);
        let u = unstable_in_section_direction(s, &leaf);
        let off: Vec<f64> = x.iter().zip(u.iter()).map(|(a, b)| a + 1e-4 * b).collect();
        let d = stable_leaf_distance(s, x, &off, &m, 1).unwrap().distance;
        assert!((d - 1e-4).abs() < 1e-5, "{d}");
        let back = stable_leaf_distance(s, &off, x, &m, 1).unwrap().distance;
        assert_eq!(d, back);
    }

    #[test]
    fn identical_pair_gives_zero_series() {
        let (m, secs, pts) = setup();
        let g = leaf_separation_growth(&m, &secs, &pts[0], &pts[0], 4, &GrowthOptions::default())
            .unwrap();
        assert!(g.distances.iter().all(|d| *d == 0.0));
        assert_eq!(g.distances.len(), 5);
    }

    #[test]
    fn far_pair_is_rejected() {
        let (m, secs, pts) = setup();
        let (a, b) = (&pts[0], &pts[1]);
        if stable_leaf_distance(&secs[0], a, b, &m, 1)
            .unwrap()
            .distance
            >= 0.1
        {
            assert!(matches!(
                leaf_separation_growth(&m, &secs, a, b, 3, &GrowthOptions::default()),
                Err(Error::Precondition(_))
            ));
        }
    }

    #[test]
    fn zero_offset_quotient_is_rejected() {
        let (m, secs, _) = setup();
        let mut o = QuotientOptions::new(vec![1.0, 1.0, 1.0]);
        o.offset = 0.0;
        assert!(matches!(
            quotient_expansion(&m, &secs, 10, 0, &o),
            Err(Error::Precondition(_))
        ));
    }
}
