use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::flow::Trajectory;
use crate::linalg::dist;

/// Longest run of x-steps that may map to the same y sample.
const MAX_STALL: usize = 2;
/// Largest y advance per x-step.
const MAX_ADVANCE: usize = 3;
const STATES: usize = MAX_STALL + 1;
/// Predecessor advances in tie-breaking order (identity first).
const ADVANCES: [usize; 4] = [1, 0, 2, 3];

/// Orbit sampled on a uniform time grid, optionally with dense output for
/// locating points on the orbit between grid nodes.
#[derive(Debug, Clone)]
pub struct GridOrbit {
    pub dt: f64,
    pub points: Vec<Vec<f64>>,
    pub dense: Option<Trajectory>,
}

impl GridOrbit {
    pub fn new(dt: f64, points: Vec<Vec<f64>>) -> Self {
        GridOrbit {
            dt,
            points,
            dense: None,
        }
    }

    fn at(&self, t: f64) -> Option<Vec<f64>> {
        self.dense.as_ref().and_then(|tr| tr.flow_at(t).ok())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    SameOrbitShift,
    StayedClose,
    Separated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    pub delta: f64,
    pub eps: f64,
    /// Distance below which a point counts as lying on the other orbit.
    pub shift_tol: f64,
    /// Stop the warp search once every admissible warp exceeds this distance.
    pub stop_above: Option<f64>,
}

/// Monotone warp stored as per-step y advances, serialized as a digit string.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Warp(pub Vec<u8>);

impl Warp {
    /// y index matched to each x index.
    pub fn indices(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.0.len() + 1);
        let mut j = 0usize;
        out.push(0);
        for a in &self.0 {
            j += *a as usize;
            out.push(j);
        }
        out
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|a| *a == 1)
    }
}

impl Serialize for Warp {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(
            &self
                .0
                .iter()
                .map(|a| (b'0' + a) as char)
                .collect::<String>(),
        )
    }
}

impl<'de> Deserialize<'de> for Warp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.bytes()
            .map(|b| {
                if (b'0'..=b'3').contains(&b) {
                    Ok(b - b'0')
                } else {
                    Err(serde::de::Error::custom("bad warp digit"))
                }
            })
            .collect::<std::result::Result<Vec<u8>, _>>()
            .map(Warp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub dt: f64,
    pub warp: Warp,
    /// Max over matched samples of the distance under the optimal warp; when
    /// the search stopped early, a lower bound that already exceeds the stop level.
    pub sup_distance: f64,
    /// Same sup under the identity warp over the compared samples.
    pub identity_sup: f64,
    pub verdict: Verdict,
    /// Time s with y(0) = x(s) (or x(0) = y(−s)) when the pair is one orbit.
    pub shift: Option<f64>,
    pub eps: f64,
    pub delta: f64,
    /// Number of x samples compared.
    pub compared: usize,
    pub complete: bool,
}

/// Minimal distance from `p` to the orbit over times [0, eps], with the time attaining it.
fn distance_to_orbit(p: &[f64], orbit: &GridOrbit, eps: f64) -> (f64, f64) {
    let dt = orbit.dt;
    let mut best = (f64::INFINITY, 0.0);
    let kmax = ((eps / dt) + 1e-9).floor() as usize;
    for (k, q) in orbit.points.iter().enumerate().take(kmax + 1) {
        let d = dist(p, q);
        if d < best.0 {
            best = (d, k as f64 * dt);
        }
    }
    if orbit.dense.is_none() {
        return best;
    }
    // refine between grid nodes: fine scan then golden section on the dense curve
    let f = |t: f64| orbit.at(t).map(|q| dist(p, &q)).unwrap_or(f64::INFINITY);
    let (lo0, hi0) = ((best.1 - dt).max(0.0), (best.1 + dt).min(eps));
    let n = 16;
    let mut tb = best.1;
    let mut fb = best.0;
    for i in 0..=n {
        let t = lo0 + (hi0 - lo0) * i as f64 / n as f64;
        let v = f(t);
        if v < fb {
            fb = v;
            tb = t;
        }
    }
    let h = (hi0 - lo0) / n as f64;
    let (mut a, mut b) = ((tb - h).max(0.0), (tb + h).min(eps));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    for (v, t) in [(fc, c), (fd, d)] {
        if v < fb {
            fb = v;
            tb = t;
        }
    }
    (fb, tb)
}

/// Signed time s with |s| ≤ eps such that one start point lies on the other orbit.
pub fn same_orbit_shift(x: &GridOrbit, y: &GridOrbit, eps: f64, shift_tol: f64) -> Option<f64> {
    if x.points.is_empty() || y.points.is_empty() {
        return None;
    }
    let (dy, sy) = distance_to_orbit(&y.points[0], x, eps);
    let (dx, sx) = distance_to_orbit(&x.points[0], y, eps);
    match (dy <= shift_tol, dx <= shift_tol) {
        (true, true) => Some(if dy <= dx { sy } else { -sx }),
        (true, false) => Some(sy),
        (false, true) => Some(-sx),
        _ => None,
    }
}

/// Banded dynamic program for the monotone warp minimizing the largest
/// matched distance. Rows are added one x sample at a time.
pub struct WarpSearch {
    band: usize,
    m: usize,
    width: usize,
    prev: Vec<f64>,
    back: Vec<Vec<u8>>,
    rows: usize,
    identity_sup: f64,
}

impl WarpSearch {
    /// `m` is the number of y samples; the warp ends at (last x, m − 1).
    pub fn new(band: usize, m: usize) -> Self {
        let width = 2 * band + 1;
        WarpSearch {
            band,
            m,
            width,
            prev: Vec::new(),
            back: Vec::new(),
            rows: 0,
            identity_sup: 0.0,
        }
    }

    fn col(&self, i: usize, j: usize) -> Option<usize> {
        let c = j as isize - i as isize + self.band as isize;
        (c >= 0 && (c as usize) < self.width).then_some(c as usize)
    }

    /// Largest y index the next row can touch.
    pub fn y_needed(&self) -> usize {
        (self.rows + self.band).min(self.m - 1)
    }

    /// Adds row `i = rows` for x sample `xi`; `y` must hold samples up to `y_needed()`.
    /// Returns the smallest cost in the new row.
    pub fn push(&mut self, xi: &[f64], y: &[Vec<f64>]) -> f64 {
        let i = self.rows;
        let mut cur = vec![f64::INFINITY; self.width * STATES];
        let mut bp = vec![0u8; self.width * STATES];
        if i < y.len() && i < self.m {
            self.identity_sup = self.identity_sup.max(dist(xi, &y[i]));
        }
        if i == 0 {
            if let Some(c) = self.col(0, 0) {
                cur[c * STATES] = dist(xi, &y[0]);
            }
        } else {
            for c in 0..self.width {
                let j = i as isize + c as isize - self.band as isize;
                if j < 0 || j as usize >= self.m {
                    continue;
                }
                let j = j as usize;
                let mut d = f64::NAN;
                for z in 0..STATES {
                    let mut best = f64::INFINITY;
                    let mut code = 0u8;
                    for &a in &ADVANCES {
                        if (a == 0) != (z > 0) || a > j {
                            continue;
                        }
                        // previous column for (i−1, j−a)
                        let pc = c as isize + 1 - a as isize;
                        if pc < 0 || pc as usize >= self.width {
                            continue;
                        }
                        let pc = pc as usize;
                        let zs: &[usize] = if a == 0 { &[z - 1][..] } else { &[0, 1, 2][..] };
                        for &zp in zs {
                            let v = self.prev[pc * STATES + zp];
                            if v < best {
                                best = v;
                                code = (a as u8) | ((zp as u8) << 2);
                            }
                        }
                    }
                    if best.is_finite() {
                        if d.is_nan() {
                            d = dist(xi, &y[j]);
                        }
                        cur[c * STATES + z] = best.max(d);
                        bp[c * STATES + z] = code;
                    }
                }
            }
        }
        self.prev = cur;
        self.back.push(bp);
        self.rows += 1;
        self.prev.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn identity_sup(&self) -> f64 {
        self.identity_sup
    }

    /// Optimal cost and warp ending at (last row, m − 1), if reachable.
    pub fn finish(&self) -> Option<(f64, Warp)> {
        let i = self.rows.checked_sub(1)?;
        let c = self.col(i, self.m - 1)?;
        let (mut z, mut cost) = (0usize, f64::INFINITY);
        for zz in 0..STATES {
            let v = self.prev[c * STATES + zz];
            if v < cost {
                cost = v;
                z = zz;
            }
        }
        if !cost.is_finite() {
            return None;
        }
        let mut adv = vec![0u8; i];
        let mut col = c;
        for row in (1..=i).rev() {
            let code = self.back[row][col * STATES + z];
            let a = code & 3;
            adv[row - 1] = a;
            z = (code >> 2) as usize;
            col = col + 1 - a as usize;
        }
        Some((cost, Warp(adv)))
    }
}

/// Optimal banded monotone warp between two orbits sampled with the same
/// spacing, with the verdict for the pair.
pub fn match_orbits(
    x: &GridOrbit,
    y: &GridOrbit,
    band: usize,
    params: &MatchParams,
) -> Result<MatchResult> {
    if band < 1 {
        return Err(Error::Input("band must be at least 1".into()));
    }
    if (x.dt - y.dt).abs() > 1e-12 * x.dt.abs().max(1.0) || !(x.dt > 0.0) {
        return Err(Error::Input(
            "orbits must share a positive grid spacing".into(),
        ));
    }
    let (n, m) = (x.points.len(), y.points.len());
    if n == 0 || m == 0 {
        return Err(Error::Input("empty orbit".into()));
    }
    if n.abs_diff(m) > band
        || (n > 1 && m > MAX_ADVANCE * (n - 1) + 1)
        || (m > 0 && n > (MAX_STALL + 1) * m)
    {
        return Err(Error::Input(
            "grid lengths cannot be matched within the band".into(),
        ));
    }
    let mut search = WarpSearch::new(band, m);
    let mut complete = true;
    let mut lower = 0.0f64;
    for xi in &x.points {
        let row_min = search.push(xi, &y.points);
        lower = lower.max(row_min);
        if params.stop_above.is_some_and(|s| row_min > s) {
            complete = search.rows == n;
            break;
        }
    }
    let shift = same_orbit_shift(x, y, params.eps, params.shift_tol);
    let (sup, warp) = match (complete, search.finish()) {
        (true, Some((c, w))) => (c, w),
        (true, None) => {
            return Err(Error::Input(
                "no admissible warp joins the endpoints".into(),
            ))
        }
        (false, _) => (lower, Warp::default()),
    };
    Ok(MatchResult {
        x: x.points[0].clone(),
        y: y.points[0].clone(),
        dt: x.dt,
        warp,
        sup_distance: sup,
        identity_sup: search.identity_sup(),
        verdict: verdict(shift, sup, params.delta),
        shift,
        eps: params.eps,
        delta: params.delta,
        compared: search.rows,
        complete,
    })
}

pub(crate) fn verdict(shift: Option<f64>, sup: f64, delta: f64) -> Verdict {
    if shift.is_some() {
        Verdict::SameOrbitShift
    } else if sup <= delta {
        Verdict::StayedClose
    } else {
        Verdict::Separated
    }
}
