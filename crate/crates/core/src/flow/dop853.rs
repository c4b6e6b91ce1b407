//! Dormand–Prince 8(5,3) embedded pair with 7th-order dense output
//! (coefficients and controller after Hairer, Nørsett & Wanner).

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

static ACCEPTED_STEPS: AtomicU64 = AtomicU64::new(0);

/// Accepted steps taken by every stepper in this process so far.
pub fn accepted_steps() -> u64 {
    ACCEPTED_STEPS.load(Ordering::Relaxed)
}

/// Autonomous first-order system `y' = f(y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, y: &[f64], dy: &mut [f64]);
}

#[derive(Debug, Clone, Copy)]
pub struct StepperOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Smallest admissible step magnitude before reporting failure.
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
    /// States with a larger Euclidean norm count as diverged.
    pub escape_norm: f64,
}

impl StepperOptions {
    /// Error control for a requested tolerance: relative per component with a
    /// tenfold safety margin, and an absolute floor small enough that strongly
    /// contracted components keep their relative accuracy.
    pub fn with_tol(tol: f64) -> Self {
        StepperOptions {
            rtol: 0.1 * tol,
            atol: 1e-7 * tol,
            h_min: 1e-12,
            h_max: f64::INFINITY,
            max_steps: 20_000_000,
            escape_norm: 1e10,
        }
    }
}

const SAFE: f64 = 0.9;
const FAC1: f64 = 0.333;
const FAC2: f64 = 6.0;

pub struct Dop853<'a, S: OdeSystem + ?Sized> {
    sys: &'a S,
    n: usize,
    opts: StepperOptions,
    t: f64,
    y: Vec<f64>,
    f: Vec<f64>,
    h: f64,
    dir: f64,
    facold: f64,
    rejected_last: bool,
    ks: Vec<Vec<f64>>,
    ytmp: Vec<f64>,
    t_old: f64,
    h_old: f64,
    y_old: Vec<f64>,
    dense: Vec<f64>,
    dense_ready: bool,
    pub steps: usize,
    pub rejected: usize,
}

impl<'a, S: OdeSystem + ?Sized> Dop853<'a, S> {
    /// Prepares integration from (t0, y0) in the direction of `t_dir_hint`.
    pub fn new(
        sys: &'a S,
        t0: f64,
        y0: &[f64],
        t_dir_hint: f64,
        opts: StepperOptions,
    ) -> Result<Self> {
        let n = sys.dim();
        if y0.len() != n {
            return Err(Error::Input(format!(
                "initial state has length {} but system dim is {n}",
                y0.len()
            )));
        }
        if y0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("initial state is not finite".into()));
        }
        let mut f = vec![0.0; n];
        sys.rhs(y0, &mut f);
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { t: t0 });
        }
        let dir = if t_dir_hint < 0.0 { -1.0 } else { 1.0 };
        let mut s = Dop853 {
            sys,
            n,
            opts,
            t: t0,
            y: y0.to_vec(),
            f,
            h: 0.0,
            dir,
            facold: 1e-4,
            rejected_last: false,
            ks: vec![vec![0.0; n]; 16],
            ytmp: vec![0.0; n],
            t_old: t0,
            h_old: 0.0,
            y_old: y0.to_vec(),
            dense: vec![0.0; 8 * n],
            dense_ready: false,
            steps: 0,
            rejected: 0,
        };
        s.h = s.initial_step();
        Ok(s)
    }

    /// Overrides the next trial step (sign is taken from the direction).
    pub fn set_step(&mut self, h: f64) {
        if h.is_finite() && h != 0.0 {
            self.h = h.abs() * self.dir;
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    pub fn last_step_start(&self) -> f64 {
        self.t_old
    }

    pub fn last_step_state(&self) -> &[f64] {
        &self.y_old
    }

    fn sk(&self, a: f64, b: f64) -> f64 {
        self.opts.atol + self.opts.rtol * a.abs().max(b.abs())
    }

    fn initial_step(&mut self) -> f64 {
        let n = self.n;
        let (mut dnf, mut dny) = (0.0, 0.0);
        for i in 0..n {
            let sk = self.opts.atol + self.opts.rtol * self.y[i].abs();
            dnf += (self.f[i] / sk).powi(2);
            dny += (self.y[i] / sk).powi(2);
        }
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
            1e-6
        } else {
            (dny / dnf).sqrt() * 0.01
        };
        h = h.min(self.opts.h_max) * self.dir;
        for i in 0..n {
            self.ytmp[i] = self.y[i] + h * self.f[i];
        }
        let mut f1 = vec![0.0; n];
        self.sys.rhs(&self.ytmp, &mut f1);
        let mut der2 = 0.0;
        for i in 0..n {
            let sk = self.opts.atol + self.opts.rtol * self.y[i].abs();
            der2 += ((f1[i] - self.f[i]) / sk).powi(2);
        }
        let der2 = der2.sqrt() / h.abs();
        let der12 = der2.abs().max(dnf.sqrt());
        let h1 = if der12 <= 1e-15 {
            (h.abs() * 1e-3).max(1e-6)
        } else {
            (0.01 / der12).powf(1.0 / 8.0)
        };
        (100.0 * h.abs()).min(h1).min(self.opts.h_max) * self.dir
    }

    fn combine(&mut self, h: f64, terms: &[(usize, f64)]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for &(k, a) in terms {
                acc += a * self.ks[k][i];
            }
            self.ytmp[i] = self.y[i] + h * acc;
        }
    }

    fn eval_stage(&mut self, target: usize) {
        let (ytmp, ks) = (&self.ytmp, &mut self.ks);
        self.sys.rhs(ytmp, &mut ks[target]);
    }

    /// Advances by one accepted step without passing `t_end`.
    pub fn step(&mut self, t_end: f64) -> Result<()> {
        let n = self.n;
        if (t_end - self.t) * self.dir <= 0.0 {
            return Err(Error::Input(
                "step requested behind the current time".into(),
            ));
        }
        self.ks[0].copy_from_slice(&self.f);
        loop {
            if self.steps + self.rejected >= self.opts.max_steps {
                return Err(Error::IntegrationFailure {
                    t: self.t,
                    reason: "step budget exhausted".into(),
                });
            }
            let mut h = self.h;
            let mut last = false;
            if (self.t + 1.01 * h - t_end) * self.dir >= 0.0 {
                h = t_end - self.t;
                last = true;
            }
            if h.abs() < self.opts.h_min && !last {
                return Err(Error::IntegrationFailure {
                    t: self.t,
                    reason: format!("step size {:e} below minimum", h.abs()),
                });
            }
            // stages 2..12 (index = stage − 1)
            self.combine(h, &[(0, A21)]);
            self.eval_stage(1);
            self.combine(h, &[(0, A31), (1, A32)]);
            self.eval_stage(2);
            self.combine(h, &[(0, A41), (2, A43)]);
            self.eval_stage(3);
            self.combine(h, &[(0, A51), (2, A53), (3, A54)]);
            self.eval_stage(4);
            self.combine(h, &[(0, A61), (3, A64), (4, A65)]);
            self.eval_stage(5);
            self.combine(h, &[(0, A71), (3, A74), (4, A75), (5, A76)]);
            self.eval_stage(6);
            self.combine(h, &[(0, A81), (3, A84), (4, A85), (5, A86), (6, A87)]);
            self.eval_stage(7);
            self.combine(
                h,
                &[(0, A91), (3, A94), (4, A95), (5, A96), (6, A97), (7, A98)],
            );
            self.eval_stage(8);
            self.combine(
                h,
                &[
                    (0, A101),
                    (3, A104),
                    (4, A105),
                    (5, A106),
                    (6, A107),
                    (7, A108),
                    (8, A109),
                ],
            );
            self.eval_stage(9);
            self.combine(
                h,
                &[
                    (0, A111),
                    (3, A114),
                    (4, A115),
                    (5, A116),
                    (6, A117),
                    (7, A118),
                    (8, A119),
                    (9, A1110),
                ],
            );
            self.eval_stage(10);
            self.combine(
                h,
                &[
                    (0, A121),
                    (3, A124),
                    (4, A125),
                    (5, A126),
                    (6, A127),
                    (7, A128),
                    (8, A129),
                    (9, A1210),
                    (10, A1211),
                ],
            );
            self.eval_stage(11);
            // increment (stored in ks[12]) and new state (ks[13])
            let mut err = 0.0;
            let mut err2 = 0.0;
            for i in 0..n {
                let k = &self.ks;
                let inc = B1 * k[0][i]
                    + B6 * k[5][i]
                    + B7 * k[6][i]
                    + B8 * k[7][i]
                    + B9 * k[8][i]
                    + B10 * k[9][i]
                    + B11 * k[10][i]
                    + B12 * k[11][i];
                let ynew = self.y[i] + h * inc;
                let sk = self.sk(self.y[i], ynew);
                let e2 = inc - BHH1 * k[0][i] - BHH2 * k[8][i] - BHH3 * k[11][i];
                err2 += (e2 / sk).powi(2);
                let e1 = ER1 * k[0][i]
                    + ER6 * k[5][i]
                    + ER7 * k[6][i]
                    + ER8 * k[7][i]
                    + ER9 * k[8][i]
                    + ER10 * k[9][i]
                    + ER11 * k[10][i]
                    + ER12 * k[11][i];
                err += (e1 / sk).powi(2);
                self.ks[12][i] = inc;
                self.ks[13][i] = ynew;
            }
            let mut deno = err + 0.01 * err2;
            if deno <= 0.0 {
                deno = 1.0;
            }
            let err = h.abs() * err * (1.0 / (deno * n as f64)).sqrt();
            if !err.is_finite() {
                if h.abs() <= self.opts.h_min {
                    return Err(Error::Divergence { t: self.t });
                }
                self.h = h * 0.1;
                self.rejected += 1;
                self.rejected_last = true;
                continue;
            }
            let fac11 = err.powf(1.0 / 8.0);
            let fac = (1.0 / FAC2).max((1.0 / FAC1).min(fac11 / SAFE));
            let mut h_new = h / fac;
            if err <= 1.0 {
                self.facold = err.max(1e-4);
                self.t_old = self.t;
                self.h_old = h;
                std::mem::swap(&mut self.y_old, &mut self.y);
                self.y.copy_from_slice(&self.ks[13]);
                self.t = if last { t_end } else { self.t + h };
                self.sys.rhs(&self.y, &mut self.f);
                self.steps += 1;
                ACCEPTED_STEPS.fetch_add(1, Ordering::Relaxed);
                self.dense_ready = false;
                if self.y.iter().chain(self.f.iter()).any(|v| !v.is_finite())
                    || crate::linalg::norm(&self.y) > self.opts.escape_norm
                {
                    return Err(Error::Divergence { t: self.t });
                }
                if self.rejected_last {
                    h_new = self.dir * h_new.abs().min(h.abs());
                    self.rejected_last = false;
                }
                self.h = self.dir * h_new.abs().min(self.opts.h_max);
                return Ok(());
            }
            h_new = h / (1.0 / FAC1).min(fac11 / SAFE);
            self.h = h_new;
            self.rejected += 1;
            self.rejected_last = true;
        }
    }

    /// Dense-output coefficients of the last accepted step (8·n values).
    pub fn dense_coefficients(&mut self) -> &[f64] {
        if !self.dense_ready {
            self.build_dense();
        }
        &self.dense
    }

    fn build_dense(&mut self) {
        let n = self.n;
        let h = self.h_old;
        for i in 0..n {
            let k = &self.ks;
            let ydiff = self.y[i] - self.y_old[i];
            let bspl = h * k[0][i] - ydiff;
            self.dense[i] = self.y_old[i];
            self.dense[n + i] = ydiff;
            self.dense[2 * n + i] = bspl;
            self.dense[3 * n + i] = ydiff - h * self.f[i] - bspl;
            self.dense[4 * n + i] = D41 * k[0][i]
                + D46 * k[5][i]
                + D47 * k[6][i]
                + D48 * k[7][i]
                + D49 * k[8][i]
                + D410 * k[9][i]
                + D411 * k[10][i]
                + D412 * k[11][i];
            self.dense[5 * n + i] = D51 * k[0][i]
                + D56 * k[5][i]
                + D57 * k[6][i]
                + D58 * k[7][i]
                + D59 * k[8][i]
                + D510 * k[9][i]
                + D511 * k[10][i]
                + D512 * k[11][i];
            self.dense[6 * n + i] = D61 * k[0][i]
                + D66 * k[5][i]
                + D67 * k[6][i]
                + D68 * k[7][i]
                + D69 * k[8][i]
                + D610 * k[9][i]
                + D611 * k[10][i]
                + D612 * k[11][i];
            self.dense[7 * n + i] = D71 * k[0][i]
                + D76 * k[5][i]
                + D77 * k[6][i]
                + D78 * k[7][i]
                + D79 * k[8][i]
                + D710 * k[9][i]
                + D711 * k[10][i]
                + D712 * k[11][i];
        }
        // f_new lives in self.f; stages 14..16 go to ks[13..16]
        let f_new = self.f.clone();
        let y_old = self.y_old.clone();
        let stage = |s: &mut Self, target: usize, terms: &[(usize, f64)], fnew_coef: f64| {
            for i in 0..n {
                let mut acc = fnew_coef * f_new[i];
                for &(k, a) in terms {
                    acc += a * s.ks[k][i];
                }
                s.ytmp[i] = y_old[i] + h * acc;
            }
            let (ytmp, ks) = (&s.ytmp, &mut s.ks);
            s.sys.rhs(ytmp, &mut ks[target]);
        };
        stage(
            self,
            13,
            &[
                (0, A141),
                (6, A147),
                (7, A148),
                (8, A149),
                (9, A1410),
                (10, A1411),
                (11, A1412),
            ],
            A1413,
        );
        stage(
            self,
            14,
            &[
                (0, A151),
                (5, A156),
                (6, A157),
                (7, A158),
                (10, A1511),
                (11, A1512),
                (13, A1514),
            ],
            A1513,
        );
        stage(
            self,
            15,
            &[
                (0, A161),
                (5, A166),
                (6, A167),
                (7, A168),
                (8, A169),
                (13, A1614),
                (14, A1615),
            ],
            A1613,
        );
        for i in 0..n {
            let k = &self.ks;
            self.dense[4 * n + i] = h
                * (self.dense[4 * n + i]
                    + D413 * f_new[i]
                    + D414 * k[13][i]
                    + D415 * k[14][i]
                    + D416 * k[15][i]);
            self.dense[5 * n + i] = h
                * (self.dense[5 * n + i]
                    + D513 * f_new[i]
                    + D514 * k[13][i]
                    + D515 * k[14][i]
                    + D516 * k[15][i]);
            self.dense[6 * n + i] = h
                * (self.dense[6 * n + i]
                    + D613 * f_new[i]
                    + D614 * k[13][i]
                    + D615 * k[14][i]
                    + D616 * k[15][i]);
            self.dense[7 * n + i] = h
                * (self.dense[7 * n + i]
                    + D713 * f_new[i]
                    + D714 * k[13][i]
                    + D715 * k[14][i]
                    + D716 * k[15][i]);
        }
        self.dense_ready = true;
    }

    /// Interpolates inside the last accepted step.
    pub fn interpolate(&mut self, t: f64, out: &mut [f64]) {
        if t == self.t {
            out.copy_from_slice(&self.y);
            return;
        }
        if t == self.t_old {
            out.copy_from_slice(&self.y_old);
            return;
        }
        let (t_old, h) = (self.t_old, self.h_old);
        let n = self.n;
        let c = self.dense_coefficients();
        eval_dense(c, n, t_old, h, t, out);
    }
}

/// Evaluates the dense polynomial of one step.
pub fn eval_dense(c: &[f64], n: usize, t_old: f64, h: f64, t: f64, out: &mut [f64]) {
    let s = (t - t_old) / h;
    let s1 = 1.0 - s;
    for i in 0..n {
        let conpar = c[4 * n + i] + s * (c[5 * n + i] + s1 * (c[6 * n + i] + s * c[7 * n + i]));
        out[i] = c[i] + s * (c[n + i] + s1 * (c[2 * n + i] + s * (c[3 * n + i] + s1 * conpar)));
    }
}

const A21: f64 = 5.26001519587677318785587544488E-2;
const A31: f64 = 1.97250569845378994544595329183E-2;
const A32: f64 = 5.91751709536136983633785987549E-2;
const A41: f64 = 2.95875854768068491816892993775E-2;
const A43: f64 = 8.87627564304205475450678981324E-2;
const A51: f64 = 2.41365134159266685502369798665E-1;
const A53: f64 = -8.84549479328286085344864962717E-1;
const A54: f64 = 9.24834003261792003115737966543E-1;
const A61: f64 = 3.7037037037037037037037037037E-2;
const A64: f64 = 1.70828608729473871279604482173E-1;
const A65: f64 = 1.25467687566822425016691814123E-1;
const A71: f64 = 3.7109375E-2;
const A74: f64 = 1.70252211019544039314978060272E-1;
const A75: f64 = 6.02165389804559606850219397283E-2;
const A76: f64 = -1.7578125E-2;
const A81: f64 = 3.70920001185047927108779319836E-2;
const A84: f64 = 1.70383925712239993810214054705E-1;
const A85: f64 = 1.07262030446373284651809199168E-1;
const A86: f64 = -1.53194377486244017527936158236E-2;
const A87: f64 = 8.27378916381402288758473766002E-3;
const A91: f64 = 6.24110958716075717114429577812E-1;
const A94: f64 = -3.36089262944694129406857109825E0;
const A95: f64 = -8.68219346841726006818189891453E-1;
const A96: f64 = 2.75920996994467083049415600797E1;
const A97: f64 = 2.01540675504778934086186788979E1;
const A98: f64 = -4.34898841810699588477366255144E1;
const A101: f64 = 4.77662536438264365890433908527E-1;
const A104: f64 = -2.48811461997166764192642586468E0;
const A105: f64 = -5.90290826836842996371446475743E-1;
const A106: f64 = 2.12300514481811942347288949897E1;
const A107: f64 = 1.52792336328824235832596922938E1;
const A108: f64 = -3.32882109689848629194453265587E1;
const A109: f64 = -2.03312017085086261358222928593E-2;
const A111: f64 = -9.3714243008598732571704021658E-1;
const A114: f64 = 5.18637242884406370830023853209E0;
const A115: f64 = 1.09143734899672957818500254654E0;
const A116: f64 = -8.14978701074692612513997267357E0;
const A117: f64 = -1.85200656599969598641566180701E1;
const A118: f64 = 2.27394870993505042818970056734E1;
const A119: f64 = 2.49360555267965238987089396762E0;
const A1110: f64 = -3.0467644718982195003823669022E0;
const A121: f64 = 2.27331014751653820792359768449E0;
const A124: f64 = -1.05344954667372501984066689879E1;
const A125: f64 = -2.00087205822486249909675718444E0;
const A126: f64 = -1.79589318631187989172765950534E1;
const A127: f64 = 2.79488845294199600508499808837E1;
const A128: f64 = -2.85899827713502369474065508674E0;
const A129: f64 = -8.87285693353062954433549289258E0;
const A1210: f64 = 1.23605671757943030647266201528E1;
const A1211: f64 = 6.43392746015763530355970484046E-1;
const A141: f64 = 5.61675022830479523392909219681E-2;
const A147: f64 = 2.53500210216624811088794765333E-1;
const A148: f64 = -2.46239037470802489917441475441E-1;
const A149: f64 = -1.24191423263816360469010140626E-1;
const A1410: f64 = 1.5329179827876569731206322685E-1;
const A1411: f64 = 8.20105229563468988491666602057E-3;
const A1412: f64 = 7.56789766054569976138603589584E-3;
const A1413: f64 = -8.298E-3;
const A151: f64 = 3.18346481635021405060768473261E-2;
const A156: f64 = 2.83009096723667755288322961402E-2;
const A157: f64 = 5.35419883074385676223797384372E-2;
const A158: f64 = -5.49237485713909884646569340306E-2;
const A1511: f64 = -1.08347328697249322858509316994E-4;
const A1512: f64 = 3.82571090835658412954920192323E-4;
const A1513: f64 = -3.40465008687404560802977114492E-4;
const A1514: f64 = 1.41312443674632500278074618366E-1;
const A161: f64 = -4.28896301583791923408573538692E-1;
const A166: f64 = -4.69762141536116384314449447206E0;
const A167: f64 = 7.68342119606259904184240953878E0;
const A168: f64 = 4.06898981839711007970213554331E0;
const A169: f64 = 3.56727187455281109270669543021E-1;
const A1613: f64 = -1.39902416515901462129418009734E-3;
const A1614: f64 = 2.9475147891527723389556272149E0;
const A1615: f64 = -9.15095847217987001081870187138E0;

const B1: f64 = 5.42937341165687622380535766363E-2;
const B6: f64 = 4.45031289275240888144113950566E0;
const B7: f64 = 1.89151789931450038304281599044E0;
const B8: f64 = -5.8012039600105847814672114227E0;
const B9: f64 = 3.1116436695781989440891606237E-1;
const B10: f64 = -1.52160949662516078556178806805E-1;
const B11: f64 = 2.01365400804030348374776537501E-1;
const B12: f64 = 4.47106157277725905176885569043E-2;

const BHH1: f64 = 0.244094488188976377952755905512E+00;
const BHH2: f64 = 0.733846688281611857341361741547E+00;
const BHH3: f64 = 0.220588235294117647058823529412E-01;

const ER1: f64 = 0.1312004499419488073250102996E-01;
const ER6: f64 = -0.1225156446376204440720569753E+01;
const ER7: f64 = -0.4957589496572501915214079952E+00;
const ER8: f64 = 0.1664377182454986536961530415E+01;
const ER9: f64 = -0.3503288487499736816886487290E+00;
const ER10: f64 = 0.3341791187130174790297318841E+00;
const ER11: f64 = 0.8192320648511571246570742613E-01;
const ER12: f64 = -0.2235530786388629525884427845E-01;

const D41: f64 = -0.84289382761090128651353491142E+01;
const D46: f64 = 0.56671495351937776962531783590E+00;
const D47: f64 = -0.30689499459498916912797304727E+01;
const D48: f64 = 0.23846676565120698287728149680E+01;
const D49: f64 = 0.21170345824450282767155149946E+01;
const D410: f64 = -0.87139158377797299206789907490E+00;
const D411: f64 = 0.22404374302607882758541771650E+01;
const D412: f64 = 0.63157877876946881815570249290E+00;
const D413: f64 = -0.88990336451333310820698117400E-01;
const D414: f64 = 0.18148505520854727256656404962E+02;
const D415: f64 = -0.91946323924783554000451984436E+01;
const D416: f64 = -0.44360363875948939664310572000E+01;
const D51: f64 = 0.10427508642579134603413151009E+02;
const D56: f64 = 0.24228349177525818288430175319E+03;
const D57: f64 = 0.16520045171727028198505394887E+03;
const D58: f64 = -0.37454675472269020279518312152E+03;
const D59: f64 = -0.22113666853125306036270938578E+02;
const D510: f64 = 0.77334326684722638389603898808E+01;
const D511: f64 = -0.30674084731089398182061213626E+02;
const D512: f64 = -0.93321305264302278729567221706E+01;
const D513: f64 = 0.15697238121770843886131091075E+02;
const D514: f64 = -0.31139403219565177677282850411E+02;
const D515: f64 = -0.93529243588444783865713862664E+01;
const D516: f64 = 0.35816841486394083752465898540E+02;
const D61: f64 = 0.19985053242002433820987653617E+02;
const D66: f64 = -0.38703730874935176555105901742E+03;
const D67: f64 = -0.18917813819516756882830838328E+03;
const D68: f64 = 0.52780815920542364900561016686E+03;
const D69: f64 = -0.11573902539959630126141871134E+02;
const D610: f64 = 0.68812326946963000169666922661E+01;
const D611: f64 = -0.10006050966910838403183860980E+01;
const D612: f64 = 0.77771377980534432092869265740E+00;
const D613: f64 = -0.27782057523535084065932004339E+01;
const D614: f64 = -0.60196695231264120758267380846E+02;
const D615: f64 = 0.84320405506677161018159903784E+02;
const D616: f64 = 0.11992291136182789328035130030E+02;
const D71: f64 = -0.25693933462703749003312586129E+02;
const D76: f64 = -0.15418974869023643374053993627E+03;
const D77: f64 = -0.23152937917604549567536039109E+03;
const D78: f64 = 0.35763911791061412378285349910E+03;
const D79: f64 = 0.93405324183624310003907691704E+02;
const D710: f64 = -0.37458323136451633156875139351E+02;
const D711: f64 = 0.10409964950896230045147246184E+03;
const D712: f64 = 0.29840293426660503123344363579E+02;
const D713: f64 = -0.43533456590011143754432175058E+02;
const D714: f64 = 0.96324553959188282948394950600E+02;
const D715: f64 = -0.39177261675615439165231486172E+02;
const D716: f64 = -0.14972683625798562581422125276E+03;
