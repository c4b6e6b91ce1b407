use serde::{Deserialize, Serialize};

use super::CrossSection;
use crate::error::{Error, Result};
use crate::flow::{check_tol, flow_map, Dop853, Region, StepperOptions};
use crate::linalg::{dist, dot};
use crate::model::VectorFieldModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissReason {
    LeftRegion,
    ExceededTmax,
    HitSingularity,
}

impl MissReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            MissReason::LeftRegion => "left_region",
            MissReason::ExceededTmax => "exceeded_tmax",
            MissReason::HitSingularity => "hit_singularity",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnRecord {
    pub entry_section: Option<String>,
    pub exit_section: Option<String>,
    pub x: Vec<f64>,
    pub rx: Option<Vec<f64>>,
    pub tau: Option<f64>,
    /// Sign of ⟨G(R(x)), n⟩ at the accepted crossing; 0 on a miss.
    pub crossing_sign: i8,
    pub miss: bool,
    pub reason: Option<MissReason>,
    /// |⟨R(x) − y, n⟩| at the accepted crossing.
    pub plane_residual: Option<f64>,
    #[serde(skip)]
    pub exit_index: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ReturnOptions {
    /// Crossings at times ≤ t1 are ignored.
    pub t1: f64,
    pub t_max: f64,
    pub tol: f64,
    /// Orbits leaving this region are reported as misses.
    pub region: Option<Region>,
    /// Equilibria whose `singular_radius`-ball ends the search.
    pub singularities: Vec<Vec<f64>>,
    pub singular_radius: f64,
}

impl Default for ReturnOptions {
    fn default() -> Self {
        ReturnOptions {
            t1: 0.1,
            t_max: 50.0,
            tol: 1e-9,
            region: None,
            singularities: Vec::new(),
            singular_radius: 0.0,
        }
    }
}

/// Crossing time tolerance of the bisection.
const TIME_TOL: f64 = 1e-10;

fn localize<S: crate::flow::OdeSystem + ?Sized>(
    st: &mut Dop853<'_, S>,
    sec: &CrossSection,
    mut a: f64,
    mut fa: f64,
    mut b: f64,
    mut fb: f64,
    buf: &mut [f64],
) -> f64 {
    while (b - a).abs() > TIME_TOL {
        let m = 0.5 * (a + b);
        st.interpolate(m, buf);
        let fm = sec.signed_distance(buf);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
            fb = fm;
        }
    }
    // secant polish inside the final bracket
    if fb != fa {
        let t = a - fa * (b - a) / (fb - fa);
        if t >= a.min(b) && t <= a.max(b) {
            return t;
        }
    }
    if fa.abs() < fb.abs() {
        a
    } else {
        b
    }
}

fn miss(x: &[f64], entry: Option<String>, reason: MissReason) -> ReturnRecord {
    ReturnRecord {
        entry_section: entry,
        exit_section: None,
        x: x.to_vec(),
        rx: None,
        tau: None,
        crossing_sign: 0,
        miss: true,
        reason: Some(reason),
        plane_residual: None,
        exit_index: None,
    }
}

fn entry_of(sections: &[CrossSection], x: &[f64]) -> Option<String> {
    sections
        .iter()
        .find(|s| s.signed_distance(x).abs() < 1e-7 && s.in_box(x))
        .map(|s| s.id.clone())
}

pub fn first_return(
    model: &VectorFieldModel,
    sections: &[CrossSection],
    x: &[f64],
    t1: f64,
    t_max: f64,
    tol: f64,
) -> Result<ReturnRecord> {
    first_return_with(
        model,
        sections,
        x,
        &ReturnOptions {
            t1,
            t_max,
            tol,
            ..ReturnOptions::default()
        },
    )
}

/// First crossing after `t1` of any section, in its designated orientation
/// and inside its inner subsection.
pub fn first_return_with(
    model: &VectorFieldModel,
    sections: &[CrossSection],
    x: &[f64],
    opts: &ReturnOptions,
) -> Result<ReturnRecord> {
    check_tol(opts.tol)?;
    if !(opts.t1 > 0.0 && opts.t1 < opts.t_max) {
        return Err(Error::Precondition("need 0 < T1 < T_max".into()));
    }
    if sections.is_empty() {
        return Err(Error::Input("no sections given".into()));
    }
    if x.len() != model.dim || sections.iter().any(|s| s.dim() != model.dim) {
        return Err(Error::Input(
            "dimension mismatch between point, sections and model".into(),
        ));
    }
    let entry = entry_of(sections, x);
    let d = model.dim;
    let mut st = match Dop853::new(model, 0.0, x, 1.0, StepperOptions::with_tol(opts.tol)) {
        Ok(s) => s,
        Err(Error::Divergence { .. }) => return Ok(miss(x, entry, MissReason::LeftRegion)),
        Err(e) => return Err(e),
    };
    let mut buf = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut prev_s: Vec<f64> = sections.iter().map(|s| s.signed_distance(x)).collect();
    loop {
        match st.step(opts.t_max) {
            Ok(()) => {}
            Err(Error::Divergence { .. }) => return Ok(miss(x, entry, MissReason::LeftRegion)),
            Err(e) => return Err(e),
        }
        let (t0, t1) = (st.last_step_start(), st.t());
        let y1 = st.y().to_vec();
        let mut best: Option<(f64, usize, Vec<f64>, i8)> = None;
        for (j, sec) in sections.iter().enumerate() {
            let s0 = prev_s[j];
            let s1 = sec.signed_distance(&y1);
            prev_s[j] = s1;
            let crossed = (s0 < 0.0 && s1 >= 0.0) || (s0 > 0.0 && s1 <= 0.0);
            if !crossed || t1 <= opts.t1 {
                continue;
            }
            let dir: i8 = if s1 > s0 { 1 } else { -1 };
            if sec.orientation != 0 && dir != sec.orientation {
                continue;
            }
            let tc = localize(&mut st, sec, t0, s0, t1, s1, &mut buf);
            if tc <= opts.t1 {
                continue;
            }
            if best.as_ref().is_some_and(|b| b.0 <= tc) {
                continue;
            }
            st.interpolate(tc, &mut buf);
            if !sec.in_inner(&buf) {
                continue;
            }
            model.eval_into(&buf, &mut g);
            let gs = dot(&g, &sec.normal);
            let sign: i8 = if gs > 0.0 {
                1
            } else if gs < 0.0 {
                -1
            } else {
                0
            };
            if sign != dir {
                continue;
            }
            best = Some((tc, j, buf.clone(), dir));
        }
        if let Some((tc, j, p, dir)) = best {
            let sec = &sections[j];
            return Ok(ReturnRecord {
                entry_section: entry,
                exit_section: Some(sec.id.clone()),
                plane_residual: Some(sec.signed_distance(&p).abs()),
                x: x.to_vec(),
                rx: Some(p),
                tau: Some(tc),
                crossing_sign: dir,
                miss: false,
                reason: None,
                exit_index: Some(j),
            });
        }
        if let Some(r) = &opts.region {
            if !r.contains(&y1) {
                return Ok(miss(x, entry, MissReason::LeftRegion));
            }
        }
        if opts.singular_radius > 0.0
            && opts
                .singularities
                .iter()
                .any(|s| dist(s, &y1) < opts.singular_radius)
        {
            return Ok(miss(x, entry, MissReason::HitSingularity));
        }
        if st.t() >= opts.t_max {
            return Ok(miss(x, entry, MissReason::ExceededTmax));
        }
    }
}

/// Up to `n` successive returns starting from `x`; stops at the first miss (which is included).
pub fn iterate_returns(
    model: &VectorFieldModel,
    sections: &[CrossSection],
    x: &[f64],
    n: usize,
    opts: &ReturnOptions,
) -> Result<Vec<ReturnRecord>> {
    let mut out = Vec::with_capacity(n);
    let mut cur = x.to_vec();
    for _ in 0..n {
        let r = first_return_with(model, sections, &cur, opts)?;
        let stop = r.miss;
        if let Some(p) = &r.rx {
            cur = p.clone();
        }
        out.push(r);
        if stop {
            break;
        }
    }
    Ok(out)
}

/// Accepted crossings along one orbit after a transient: the points are
/// returns of the orbit started at `seed_point` once `transient` has elapsed.
pub fn section_crossings(
    model: &VectorFieldModel,
    sections: &[CrossSection],
    seed_point: &[f64],
    transient: f64,
    n: usize,
    opts: &ReturnOptions,
) -> Result<Vec<Vec<f64>>> {
    let start = flow_map(model, seed_point, transient, opts.tol)?;
    let recs = iterate_returns(model, sections, &start, n, opts)?;
    let pts: Vec<Vec<f64>> = recs.iter().filter_map(|r| r.rx.clone()).collect();
    if pts.len() < n {
        return Err(Error::InsufficientData(format!(
            "orbit produced only {} of {n} returns",
            pts.len()
        )));
    }
    Ok(pts)
}

/// Rows with header `entry_section,exit_section,x1..xd,Rx1..Rxd,tau,miss,reason`.
pub fn records_csv(records: &[ReturnRecord], dim: usize) -> String {
    let mut s = String::from("entry_section,exit_section");
    for i in 1..=dim {
        s.push_str(&format!(",x{i}"));
    }
    for i in 1..=dim {
        s.push_str(&format!(",Rx{i}"));
    }
    s.push_str(",tau,miss,reason\n");
    for r in records {
        s.push_str(r.entry_section.as_deref().unwrap_or(""));
        s.push(',');
        s.push_str(r.exit_section.as_deref().unwrap_or(""));
        for v in &r.x {
            s.push_str(&format!(",{v:.17e}"));
        }
        for i in 0..dim {
            match &r.rx {
                Some(p) => s.push_str(&format!(",{:.17e}", p[i])),
                None => s.push(','),
            }
        }
        match r.tau {
            Some(t) => s.push_str(&format!(",{t:.17e}")),
            None => s.push(','),
        }
        s.push_str(&format!(
            ",{},{}\n",
            r.miss,
            r.reason.map(|m| m.as_str()).unwrap_or("")
        ));
    }
    s
}
