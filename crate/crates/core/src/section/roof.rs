use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::returns::{first_return_with, section_crossings, ReturnOptions};
use super::CrossSection;
use crate::equilibria::EquilibriumReport;
use crate::error::{Error, Result};
use crate::flow::{Dop853, StepperOptions};
use crate::linalg::{complement, dist, linear_fit, qr_positive, svd_ascending};
use crate::model::VectorFieldModel;
use crate::rng::halton;

/// Flag attached to fits whose samples never leave the regular return-time band.
pub const BOUNDED_REGIME: &str = "bounded regime, τ ≤ T₁+2 band";

#[derive(Debug, Clone)]
pub struct RoofOptions {
    pub returns: ReturnOptions,
    /// Orbit used to harvest section points that bracket the singular set.
    pub seed_point: Vec<f64>,
    pub transient: f64,
    pub n_crossings: usize,
    /// Radius of the ball around σ used to classify which way an orbit leaves it;
    /// by default three quarters of the distance from σ to the section plane.
    pub fate_radius: Option<f64>,
    /// In-section shift used to estimate the tangent of the singular set.
    pub shift: f64,
    /// Sample distances are 10^-k with k spread evenly over this range.
    pub k_range: (f64, f64),
}

impl RoofOptions {
    pub fn new(seed_point: Vec<f64>) -> Self {
        RoofOptions {
            returns: ReturnOptions {
                tol: 1e-12,
                ..ReturnOptions::default()
            },
            seed_point,
            transient: 50.0,
            n_crossings: 200,
            fate_radius: None,
            shift: 1e-3,
            k_range: (2.0, 8.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoofSample {
    pub dist: f64,
    /// None when the orbit missed the sections.
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoofFit {
    pub samples: Vec<RoofSample>,
    /// τ ≈ −C·ln(dist) + b.
    #[serde(rename = "C")]
    pub c: Option<f64>,
    pub b: Option<f64>,
    pub r2: Option<f64>,
    /// Samples entering the fit (τ > T₁ + 2).
    pub n_used: usize,
    pub rejected: Option<String>,
    /// Point on the section where the singular set was located.
    pub anchor: Vec<f64>,
    /// In-section unit normal to the singular set at the anchor.
    pub normal: Vec<f64>,
}

/// Unit eigenvector of the single expanding eigenvalue at σ.
fn unstable_direction(model: &VectorFieldModel, sigma: &EquilibriumReport) -> Result<Vec<f64>> {
    let d = model.dim;
    let j = model.eval_jacobian(&sigma.position)?;
    let lu = sigma
        .lambda_u
        .ok_or_else(|| Error::Precondition("σ has no expanding eigenvalue".into()))?;
    let (_, v) = svd_ascending(&(j - DMatrix::identity(d, d) * lu))?;
    Ok(v.column(0).iter().copied().collect())
}

struct Fate<'a> {
    model: &'a VectorFieldModel,
    sections: &'a [CrossSection],
    sigma: &'a [f64],
    e_u: &'a [f64],
    rho: f64,
    opts: &'a RoofOptions,
}

impl Fate<'_> {
    /// Side of the local stable manifold of σ the orbit of `x` falls to before
    /// its first return: ±1 by the unstable coordinate on leaving the ball
    /// around σ, 0 if the orbit never visits the ball.
    fn of(&self, x: &[f64]) -> Result<i8> {
        let r = first_return_with(self.model, self.sections, x, &self.opts.returns)?;
        let horizon = r.tau.unwrap_or(self.opts.returns.t_max);
        let mut st = Dop853::new(
            self.model,
            0.0,
            x,
            1.0,
            StepperOptions::with_tol(self.opts.returns.tol),
        )?;
        let rho = self.rho;
        let mut inside = dist(x, self.sigma) < rho;
        let mut entered = false;
        while st.t() < horizon {
            match st.step(horizon) {
                Ok(()) => {}
                Err(Error::Divergence { .. }) => return Ok(0),
                Err(e) => return Err(e),
            }
            let y = st.y();
            let now = dist(y, self.sigma) < rho;
            if now && !inside {
                entered = true;
            }
            if !now && inside && entered {
                let u: f64 = y
                    .iter()
                    .zip(self.sigma)
                    .zip(self.e_u)
                    .map(|((a, b), e)| (a - b) * e)
                    .sum();
                return Ok(if u >= 0.0 { 1 } else { -1 });
            }
            inside = now;
        }
        Ok(0)
    }

    /// Bisects the segment a→b (fates fa = −fb ≠ 0) for the fate switch.
    fn bisect(&self, a: &[f64], b: &[f64], fa: i8) -> Result<Option<Vec<f64>>> {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let len = dist(a, b);
        let at = |s: f64| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + s * (q - p)).collect() };
        while (hi - lo) * len > 1e-13 && hi - lo > 4.0 * f64::EPSILON {
            let mid = 0.5 * (lo + hi);
            match self.of(&at(mid))? {
                0 => return Ok(None),
                f if f == fa => lo = mid,
                _ => hi = mid,
            }
        }
        Ok(Some(at(0.5 * (lo + hi))))
    }
}

/// A switch of fate can also come from an orbit grazing the ball; only a switch
/// across the stable manifold makes the return time grow as the switch is approached.
fn blows_up(fate: &Fate, g0: &[f64], p: &[f64], n: &[f64]) -> Result<bool> {
    let len = dist(p, n);
    let at = |s: f64| -> Vec<f64> {
        g0.iter()
            .zip(p)
            .zip(n)
            .map(|((g, a), b)| g + s * (b - a) / len)
            .collect()
    };
    let tau = |x: &[f64]| -> Result<f64> {
        let r = first_return_with(fate.model, fate.sections, x, &fate.opts.returns)?;
        Ok(r.tau.unwrap_or(f64::INFINITY))
    };
    for side in [-1.0, 1.0] {
        let far = (1e-2f64).min(0.5 * len);
        if !(tau(&at(side * 1e-8))? > tau(&at(side * far))? + 0.5) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Locates a point of the section lying on the stable manifold of σ, with the
/// in-section unit normal of that manifold there.
fn locate_singular_set(
    fate: &Fate,
    sec_index: usize,
    candidates: &[Vec<f64>],
) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    let sec = &fate.sections[sec_index];
    let fates: Vec<Result<i8>> = candidates.par_iter().map(|x| fate.of(x)).collect();
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (x, f) in candidates.iter().zip(fates) {
        match f? {
            1 => pos.push(x),
            -1 => neg.push(x),
            _ => {}
        }
    }
    let mut brackets: Vec<(f64, &Vec<f64>, &Vec<f64>)> = pos
        .iter()
        .flat_map(|p| neg.iter().map(move |n| (dist(p, n), *p, *n)))
        .collect();
    brackets.sort_by(|a, b| a.0.total_cmp(&b.0));
    let d = sec.dim();
    for (_, p, n) in brackets.into_iter().take(20) {
        let Some(g0) = fate.bisect(p, n, 1)? else {
            continue;
        };
        if !blows_up(fate, &g0, p, n)? {
            continue;
        }
        // tangent directions of the singular set from brackets shifted within the section
        let axis =
            DVector::from_iterator(d, n.iter().zip(p.iter()).map(|(a, b)| a - b)).normalize();
        let ac = sec.frame.transpose() * &axis;
        let others = complement(&DMatrix::from_column_slice(d - 1, 1, ac.as_slice()));
        let mut tangents = DMatrix::zeros(d - 1, others.ncols());
        let mut ok = true;
        for k in 0..others.ncols() {
            let off = &sec.frame * others.column(k) * fate.opts.shift;
            let half = 10.0 * fate.opts.shift;
            let a: Vec<f64> = g0
                .iter()
                .enumerate()
                .map(|(i, v)| v + off[i] - half * axis[i])
                .collect();
            let b: Vec<f64> = g0
                .iter()
                .enumerate()
                .map(|(i, v)| v + off[i] + half * axis[i])
                .collect();
            if !sec.in_box(&a) || !sec.in_box(&b) {
                ok = false;
                break;
            }
            let (fa, fb) = (fate.of(&a)?, fate.of(&b)?);
            if fa == 0 || fb == 0 || fa == fb {
                ok = false;
                break;
            }
            let Some(g1) = fate.bisect(&a, &b, fa)? else {
                ok = false;
                break;
            };
            let t: Vec<f64> = g1.iter().zip(&g0).map(|(x, y)| x - y).collect();
            let tc = sec.frame.transpose() * DVector::from_vec(t);
            tangents.set_column(k, &tc);
        }
        if !ok {
            continue;
        }
        let nc = if tangents.ncols() == 0 {
            ac.clone()
        } else {
            let (q, _) = qr_positive(&tangents)?;
            complement(&q).column(0).into_owned()
        };
        let nu = (&sec.frame * nc).normalize();
        return Ok(Some((g0, nu.as_slice().to_vec())));
    }
    Ok(None)
}

/// Return times of section points approaching the stable manifold of σ,
/// fitted against the logarithm of their distance to it.
pub fn roof_fit(
    model: &VectorFieldModel,
    sections: &[CrossSection],
    n_samples: usize,
    sigma: &EquilibriumReport,
    opts: &RoofOptions,
) -> Result<RoofFit> {
    if !sigma.lorenz_like {
        return Err(Error::Precondition("σ is not Lorenz-like".into()));
    }
    if n_samples < 3 {
        return Err(Error::Precondition("need at least three samples".into()));
    }
    if !(opts.k_range.0 <= opts.k_range.1) {
        return Err(Error::Input("k_range must be increasing".into()));
    }
    let e_u = unstable_direction(model, sigma)?;
    let mut found = None;
    let crossings = section_crossings(
        model,
        sections,
        &opts.seed_point,
        opts.transient,
        opts.n_crossings,
        &opts.returns,
    )?;
    for j in 0..sections.len() {
        let sec = &sections[j];
        let rho = opts
            .fate_radius
            .unwrap_or_else(|| 0.75 * sec.signed_distance(&sigma.position).abs());
        if !(rho > 0.0) {
            continue;
        }
        let fate = Fate {
            model,
            sections,
            sigma: &sigma.position,
            e_u: &e_u,
            rho,
            opts,
        };
        let mut on: Vec<Vec<f64>> = crossings
            .iter()
            .filter(|x| sec.signed_distance(x).abs() < 1e-7 && sec.in_box(x))
            .cloned()
            .collect();
        // low-discrepancy fill of the inner box, so brackets exist even when the orbit avoids σ
        on.extend((1..=opts.n_crossings).map(|i| {
            let h = halton(i, sec.dim() - 1);
            let c: Vec<f64> = h
                .iter()
                .zip(&sec.half_widths)
                .map(|(u, w)| (2.0 * u - 1.0) * w * sec.inner_fraction)
                .collect();
            sec.from_coords(&c)
        }));
        if let Some(hit) = locate_singular_set(&fate, j, &on)? {
            found = Some((j, hit));
            break;
        }
    }
    let Some((j, (g0, nu))) = found else {
        return Err(Error::InsufficientData(
            "no section points bracket the stable manifold of σ".into(),
        ));
    };
    let sec = &sections[j];
    let (k0, k1) = opts.k_range;
    let pts: Vec<(f64, Vec<f64>)> = (0..n_samples)
        .map(|i| {
            let k = if n_samples == 1 {
                k0
            } else {
                k0 + (k1 - k0) * i as f64 / (n_samples - 1) as f64
            };
            let s = 10f64.powf(-k);
            let side = if i % 2 == 0 { 1.0 } else { -1.0 };
            (
                s,
                g0.iter()
                    .zip(&nu)
                    .map(|(g, n)| g + side * s * n)
                    .collect::<Vec<f64>>(),
            )
        })
        .filter(|(_, p)| sec.in_box(p))
        .collect();
    let taus: Vec<Result<Option<f64>>> = pts
        .par_iter()
        .map(|(_, p)| first_return_with(model, sections, p, &opts.returns).map(|r| r.tau))
        .collect();
    let mut samples = Vec::with_capacity(pts.len());
    for ((s, _), t) in pts.iter().zip(taus) {
        samples.push(RoofSample { dist: *s, tau: t? });
    }
    let returned: Vec<&RoofSample> = samples.iter().filter(|s| s.tau.is_some()).collect();
    if returned.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "only {} sample orbits returned",
            returned.len()
        )));
    }
    let cut = opts.returns.t1 + 2.0;
    let used: Vec<&&RoofSample> = returned.iter().filter(|s| s.tau.unwrap() > cut).collect();
    let mut fit = RoofFit {
        samples: samples.clone(),
        c: None,
        b: None,
        r2: None,
        n_used: used.len(),
        rejected: None,
        anchor: g0,
        normal: nu,
    };
    if used.len() < 3 {
        fit.rejected = Some(BOUNDED_REGIME.into());
        return Ok(fit);
    }
    let xs: Vec<f64> = used.iter().map(|s| s.dist.ln()).collect();
    let ys: Vec<f64> = used.iter().map(|s| s.tau.unwrap()).collect();
    let (slope, intercept, r2) = linear_fit(&xs, &ys);
    fit.c = Some(-slope);
    fit.b = Some(intercept);
    fit.r2 = Some(r2.clamp(0.0, 1.0));
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::super::make_section;
    use super::*;
    use crate::equilibria::classify_equilibrium;

    fn lorenz_section(m: &VectorFieldModel) -> Vec<CrossSection> {
        vec![make_section(
            &[0.0, 0.0, 27.0],
            m,
            &[20.0, 20.0],
            0,
            Some(&[0.0, 0.0, 1.0]),
            "z27",
        )
        .unwrap()]
    }

    #[test]
    fn log_law_near_origin_manifold() {
        let m = VectorFieldModel::lorenz_classic();
        let sigma = classify_equilibrium(&m, &[0.0; 3], 1).unwrap();
        let fit = roof_fit(
            &m,
            &lorenz_section(&m),
            30,
            &sigma,
            &RoofOptions::new(vec![1.0, 1.0, 1.0]),
        )
        .unwrap();
        assert!(fit.r2.unwrap() > 0.9);
        // the lingering time near σ scales with the inverse expanding rate
        let c = fit.c.unwrap();
        assert!((c * sigma.lambda_u.unwrap() - 1.0).abs() < 0.1, "{c}");
        assert!(
            fit.samples
                .iter()
                .filter(|s| s.tau.is_some_and(|t| t > 2.1))
                .count()
                == fit.n_used
        );
    }

    #[test]
    fn far_samples_stay_in_bounded_band() {
        let m = VectorFieldModel::lorenz_classic();
        let sigma = classify_equilibrium(&m, &[0.0; 3], 1).unwrap();
        let mut o = RoofOptions::new(vec![1.0, 1.0, 1.0]);
        o.k_range = (-0.9, 0.9);
        let fit = roof_fit(&m, &lorenz_section(&m), 20, &sigma, &o).unwrap();
        assert_eq!(fit.rejected.as_deref(), Some(BOUNDED_REGIME));
        assert!(fit.c.is_none());
    }

    #[test]
    fn sink_is_not_lorenz_like() {
        let m = VectorFieldModel::lorenz(10.0, 0.5, 8.0 / 3.0);
        let sigma = classify_equilibrium(&m, &[0.0; 3], 1).unwrap();
        let secs = lorenz_section(&VectorFieldModel::lorenz_classic());
        let r = roof_fit(
            &m,
            &secs,
            10,
            &sigma,
            &RoofOptions::new(vec![1.0, 1.0, 1.0]),
        );
        assert!(matches!(r, Err(Error::Precondition(_))));
    }
}
