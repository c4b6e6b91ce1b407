use std::sync::OnceLock;

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};

use sechyp::equilibria::{
    classify_equilibrium, find_equilibria, merge_equilibria, padded_box, polish_equilibrium,
    strong_dissipativity, DissipativityOptions, EquilibriumReport,
};
use sechyp::expansive::{
    chaos_probe, expansiveness_probe, robustness_sweep, summary_csv, ChaosCheck, ConeCheck,
    ExpansionCheck, GrowthCheck, SweepConfig,
};
use sechyp::flow::{attractor_sample, integrate, trap_check, TrapOptions};
use sechyp::linalg::percentile;
use sechyp::model::{Perturbation, VectorFieldModel};
use sechyp::section::{
    growth_batch, iterate_returns, quotient_expansion, records_csv, roof_fit, section_from_config,
    CrossSection, GrowthOptions, QuotientOptions, ReturnOptions, ReturnRecord, RoofOptions,
};
use sechyp::splitting::{
    cone_grid, cone_invariance, diagnostics_csv, domination, lyapunov_spectrum,
    sectional_expansion, ConeOptions, DominationOptions, ExpansionOptions, SplittingOptions,
};
use sechyp::Error;

use crate::config::RunConfig;
use crate::plots;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Classify,
    Dissipativity,
    Trap,
    Cones,
    Expansion,
    Domination,
    Lyapunov,
    Poincare,
    Roof,
    Growth,
    Quotient,
    Expansive,
    Chaos,
    Robust,
    All,
}

/// Counterexample trajectories written per expansive run.
const BUNDLE_LIMIT: usize = 5;

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::Dissipativity => "dissipativity",
            Command::Trap => "trap",
            Command::Cones => "cones",
            Command::Expansion => "expansion",
            Command::Domination => "domination",
            Command::Lyapunov => "lyapunov",
            Command::Poincare => "poincare",
            Command::Roof => "roof",
            Command::Growth => "growth",
            Command::Quotient => "quotient",
            Command::Expansive => "expansive",
            Command::Chaos => "chaos",
            Command::Robust => "robust",
            Command::All => "all",
        }
    }

    /// Single-model commands run by `all`, skipping those whose inputs are
    /// not configured. The perturbation sweep is never part of `all`.
    pub fn expand(self, cfg: &RunConfig) -> Vec<Command> {
        if self != Command::All {
            return vec![self];
        }
        let has_sections = !cfg.sections.is_empty();
        let mut out = vec![Command::Classify, Command::Dissipativity];
        if cfg.trap.is_some() {
            out.push(Command::Trap);
        }
        out.extend([
            Command::Cones,
            Command::Expansion,
            Command::Domination,
            Command::Lyapunov,
        ]);
        if has_sections {
            out.push(Command::Poincare);
            if !cfg.singularities.is_empty() {
                out.push(Command::Roof);
            }
            out.extend([Command::Growth, Command::Quotient]);
        }
        out.extend([Command::Expansive, Command::Chaos]);
        out
    }
}

/// Why a command did not complete.
#[derive(Debug)]
pub enum Failure {
    /// Bad configuration or inputs the run cannot use.
    Config(String),
    /// The numerical machinery failed.
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numeric() {
            Failure::Numeric(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

pub type Outcome<T> = std::result::Result<T, Failure>;

/// A completed command: its verdict, JSON report and side files.
pub struct Completed {
    pub pass: bool,
    pub report: Value,
    /// (file name, contents) for CSV tables, plot scripts and bundles.
    pub files: Vec<(String, String)>,
}

pub struct Context {
    pub cfg: RunConfig,
    pub model: VectorFieldModel,
    sample: OnceLock<Result<Vec<Vec<f64>>, Error>>,
}

impl Context {
    pub fn new(cfg: RunConfig) -> Outcome<Self> {
        let model = VectorFieldModel::from_config(&cfg.model)?;
        if let Some(p) = &cfg.attractor.seed_point {
            if p.len() != model.dim {
                return Err(Failure::Config(
                    "attractor.seed_point dimension does not match the model".into(),
                ));
            }
        }
        Ok(Context {
            cfg,
            model,
            sample: OnceLock::new(),
        })
    }

    fn seed_point(&self) -> Vec<f64> {
        self.cfg.seed_point(self.model.dim)
    }

    fn sample(&self) -> Outcome<&[Vec<f64>]> {
        let a = &self.cfg.attractor;
        let s = self.sample.get_or_init(|| {
            attractor_sample(
                &self.model,
                &self.seed_point(),
                a.transient,
                a.sample_size,
                a.spacing,
                self.cfg.tol,
            )
        });
        match s {
            Ok(v) => Ok(v),
            Err(e) => Err(e.clone().into()),
        }
    }

    fn sections(&self) -> Outcome<Vec<CrossSection>> {
        if self.cfg.sections.is_empty() {
            return Err(Failure::Config("no sections configured".into()));
        }
        Ok(self
            .cfg
            .sections
            .iter()
            .enumerate()
            .map(|(i, c)| section_from_config(c, &self.model, i))
            .collect::<Result<Vec<_>, _>>()?)
    }

    fn returns(&self) -> ReturnOptions {
        ReturnOptions {
            tol: self.cfg.tol,
            ..ReturnOptions::default()
        }
    }

    fn splitting(&self) -> SplittingOptions {
        SplittingOptions {
            tol: self.cfg.tol,
            ..SplittingOptions::default()
        }
    }

    pub fn run(&self, command: Command) -> Outcome<Completed> {
        let (pass, report, files) = match command {
            Command::Classify => self.classify()?,
            Command::Dissipativity => self.dissipativity()?,
            Command::Trap => self.trap()?,
            Command::Cones => self.cones()?,
            Command::Expansion => self.expansion()?,
            Command::Domination => self.domination()?,
            Command::Lyapunov => self.lyapunov()?,
            Command::Poincare => self.poincare()?,
            Command::Roof => self.roof()?,
            Command::Growth => self.growth()?,
            Command::Quotient => self.quotient()?,
            Command::Expansive => self.expansive()?,
            Command::Chaos => self.chaos()?,
            Command::Robust => self.robust()?,
            Command::All => {
                return Err(Failure::Config("`all` expands into single commands".into()))
            }
        };
        let report = json!({
            "command": command.name(),
            "model_id": self.model.id,
            "pass": pass,
            "report": report,
        });
        Ok(Completed {
            pass,
            report,
            files,
        })
    }

    fn search_box(&self) -> Outcome<(Vec<f64>, Vec<f64>)> {
        let c = &self.cfg.classify;
        match (&c.lo, &c.hi) {
            (Some(lo), Some(hi)) => Ok((lo.clone(), hi.clone())),
            (None, None) => Ok(padded_box(self.sample()?, 0.1)),
            _ => Err(Failure::Config(
                "classify needs both lo and hi, or neither".into(),
            )),
        }
    }

    /// Equilibria found in the search box together with the polished
    /// configured singularities, without duplicates.
    fn equilibrium_positions(&self) -> Outcome<Vec<Vec<f64>>> {
        let (lo, hi) = self.search_box()?;
        let found = find_equilibria(
            &self.model,
            &lo,
            &hi,
            self.cfg.classify.n_seeds,
            self.cfg.seed,
        )?;
        Ok(merge_equilibria(
            &self.model,
            found,
            &self.cfg.singularities,
        )?)
    }

    fn classify(&self) -> Outcome<Step> {
        let (lo, hi) = self.search_box()?;
        let equilibria = self
            .equilibrium_positions()?
            .iter()
            .map(|p| classify_equilibrium(&self.model, p, self.cfg.d_s))
            .collect::<Result<Vec<_>, _>>()?;
        let singularities = self.singularities()?;
        let pass =
            equilibria.iter().all(|e| e.hyperbolic) && singularities.iter().all(|e| e.lorenz_like);
        let report = ClassifyReport {
            search_lo: lo,
            search_hi: hi,
            equilibria,
            singularities,
        };
        Ok((pass, to_value(&report), Vec::new()))
    }

    fn singularities(&self) -> Outcome<Vec<EquilibriumReport>> {
        let mut out = Vec::new();
        for g in &self.cfg.singularities {
            let p = polish_equilibrium(&self.model, g)?;
            out.push(classify_equilibrium(&self.model, &p, self.cfg.d_s)?);
        }
        Ok(out)
    }

    fn dissipativity(&self) -> Outcome<Step> {
        let c = &self.cfg.dissipativity;
        let opts = DissipativityOptions {
            equilibria: Some(self.equilibrium_positions()?),
            ..c.options(self.cfg.seed)
        };
        let r = strong_dissipativity(&self.model, self.cfg.d_s, c.q, self.sample()?, &opts)?;
        Ok((r.pass, to_value(&r), Vec::new()))
    }

    fn trap(&self) -> Outcome<Step> {
        let t = self
            .cfg
            .trap
            .as_ref()
            .ok_or_else(|| Failure::Config("no trap region configured".into()))?;
        let opts = TrapOptions {
            seed: self.cfg.seed,
            tol: self.cfg.tol,
            ..TrapOptions::default()
        };
        let r = trap_check(&self.model, &t.region, t.n_boundary, t.horizon, &opts)?;
        Ok((r.passed, to_value(&r), Vec::new()))
    }

    fn cones(&self) -> Outcome<Step> {
        let c = &self.cfg.cones;
        let opts = ConeOptions {
            samples: c.samples,
            seed: self.cfg.seed,
            splitting: self.splitting(),
            ..ConeOptions::default()
        };
        let pts = evenly(self.sample()?, c.n_points);
        let r = cone_invariance(&self.model, &pts, self.cfg.d_s, c.a, c.t, &opts)?;
        let pass = r.pass_fraction == 1.0 && r.worst_margin > 0.0;
        let mut files = vec![
            ("cones.csv".to_string(), diagnostics_csv(&r.points)),
            plots::margins("cones"),
        ];
        let mut report = to_value(&r);
        if !c.grid_apertures.is_empty() && !c.grid_times.is_empty() {
            let g = cone_grid(
                &self.model,
                &pts,
                self.cfg.d_s,
                &c.grid_apertures,
                &c.grid_times,
                &opts,
            )?;
            let mut csv = String::from("a,T,pass_fraction,worst_margin\n");
            for e in &g {
                csv.push_str(&format!(
                    "{},{},{},{:.17e}\n",
                    e.a, e.t, e.pass_fraction, e.worst_margin
                ));
            }
            files.push(("cones_grid.csv".into(), csv));
            report["grid"] = to_value(&g);
        }
        Ok((pass, report, files))
    }

    fn expansion(&self) -> Outcome<Step> {
        let c = &self.cfg.expansion;
        let opts = ExpansionOptions {
            seed: self.cfg.seed,
            splitting: self.splitting(),
            ..ExpansionOptions::default()
        };
        let r = sectional_expansion(
            &self.model,
            &evenly(self.sample()?, c.n_points),
            self.cfg.d_s,
            c.t,
            &opts,
        )?;
        let mut csv = String::from("t,mean_min_log_area\n");
        for (t, a) in r.times.iter().zip(&r.mean_min_log_area) {
            csv.push_str(&format!("{t:.17e},{a:.17e}\n"));
        }
        let files = vec![
            ("expansion.csv".into(), csv),
            ("expansion_points.csv".into(), diagnostics_csv(&r.points)),
            plots::log_area(),
        ];
        Ok((r.pass, to_value(&r), files))
    }

    fn domination(&self) -> Outcome<Step> {
        let c = &self.cfg.domination;
        let opts = DominationOptions {
            splitting: self.splitting(),
            ..DominationOptions::default()
        };
        let r = domination(
            &self.model,
            &evenly(self.sample()?, c.n_points),
            self.cfg.d_s,
            c.t,
            &opts,
        )?;
        let pass = r.pass_fraction == 1.0 && r.worst_margin > 0.0;
        let files = vec![
            ("domination.csv".into(), diagnostics_csv(&r.points)),
            plots::margins("domination"),
        ];
        Ok((pass, to_value(&r), files))
    }

    fn lyapunov(&self) -> Outcome<Step> {
        let c = &self.cfg.lyapunov;
        let x0 = &self.sample()?[0];
        let r = lyapunov_spectrum(&self.model, x0, c.t, c.warmup, self.cfg.tol)?;
        let pass = (r.sum - r.divergence_average).abs() <= c.liouville_tol;
        let mut csv = String::from("index,exponent,band\n");
        for (i, (l, b)) in r.exponents.iter().zip(&r.band).enumerate() {
            csv.push_str(&format!("{},{l:.17e},{b:.17e}\n", i + 1));
        }
        Ok((pass, to_value(&r), vec![("lyapunov.csv".into(), csv)]))
    }

    fn poincare(&self) -> Outcome<Step> {
        let c = &self.cfg.poincare;
        let sections = self.sections()?;
        let opts = ReturnOptions {
            t1: c.t1,
            t_max: c.t_max,
            ..self.returns()
        };
        let records = iterate_returns(&self.model, &sections, &self.sample()?[0], c.n, &opts)?;
        let report = PoincareReport::new(&records, c.n, c.max_residual);
        let pass = report.fraction >= c.min_fraction;
        let files = vec![
            ("poincare.csv".into(), records_csv(&records, self.model.dim)),
            plots::return_map(self.model.dim),
        ];
        Ok((
            pass,
            json!({ "summary": report, "records": records }),
            files,
        ))
    }

    fn roof(&self) -> Outcome<Step> {
        let c = &self.cfg.roof;
        let sections = self.sections()?;
        let guess = self.cfg.singularities.get(c.singularity).ok_or_else(|| {
            Failure::Config(format!(
                "roof.singularity {} is not configured",
                c.singularity
            ))
        })?;
        let p = polish_equilibrium(&self.model, guess)?;
        let sigma = classify_equilibrium(&self.model, &p, self.cfg.d_s)?;
        let mut opts = RoofOptions::new(self.seed_point());
        opts.transient = self.cfg.attractor.transient;
        opts.n_crossings = c.n_crossings;
        opts.k_range = c.k_range;
        let r = roof_fit(&self.model, &sections, c.n_samples, &sigma, &opts)?;
        let pass = r.c.is_some() && r.r2.is_some_and(|v| v > c.min_r2);
        let mut csv = String::from("dist,tau\n");
        for s in &r.samples {
            if let Some(t) = s.tau {
                csv.push_str(&format!("{:.17e},{t:.17e}\n", s.dist));
            }
        }
        let files = vec![("roof.csv".into(), csv), plots::roof(r.c, r.b)];
        Ok((pass, to_value(&r), files))
    }

    fn growth_options(&self) -> GrowthOptions {
        GrowthOptions {
            d_s: self.cfg.d_s,
            delta_sep: self.cfg.growth.separation,
            returns: self.returns(),
            ..GrowthOptions::default()
        }
    }

    fn growth(&self) -> Outcome<Step> {
        let c = &self.cfg.growth;
        let sections = self.sections()?;
        let a = &self.cfg.attractor;
        let opts = self.growth_options();
        let b = growth_batch(
            &self.model,
            &sections,
            &self.seed_point(),
            a.transient,
            c.n_pairs,
            c.offset,
            c.n_returns,
            &opts,
        )?;
        let pass = b.median_factor > c.min_median && b.separated == b.pairs;
        let mut csv = String::from("pair,return,distance\n");
        for (i, s) in b.series.iter().enumerate() {
            for (k, d) in s.distances.iter().enumerate() {
                csv.push_str(&format!("{i},{k},{d:.17e}\n"));
            }
        }
        Ok((
            pass,
            to_value(&b),
            vec![("growth.csv".into(), csv), plots::growth()],
        ))
    }

    fn quotient(&self) -> Outcome<Step> {
        let c = &self.cfg.quotient;
        let sections = self.sections()?;
        let mut opts = QuotientOptions::new(self.seed_point());
        opts.d_s = self.cfg.d_s;
        opts.offset = c.offset;
        opts.alignment = c.alignment;
        opts.transient = self.cfg.attractor.transient;
        opts.growth = self.growth_options();
        let r = quotient_expansion(&self.model, &sections, c.n_pairs, self.cfg.seed, &opts)?;
        let pass = r.mu_hat > c.min_mu;
        let mut csv = String::from("factor\n");
        for f in &r.factors {
            csv.push_str(&format!("{f:.17e}\n"));
        }
        Ok((
            pass,
            to_value(&r),
            vec![("quotient.csv".into(), csv), plots::histogram()],
        ))
    }

    fn expansive(&self) -> Outcome<Step> {
        let opts = &self.cfg.expansive;
        let r = expansiveness_probe(&self.model, self.sample()?, opts)?;
        let mut csv = String::from(
            "delta,pairs,separated,stayed_close,same_orbit_shift,on_leaf_excluded,inconclusive,failures,counterexamples\n",
        );
        for s in &r.per_delta {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                s.delta,
                s.pairs,
                s.separated,
                s.stayed_close,
                s.same_orbit_shift,
                s.on_leaf_excluded,
                s.inconclusive,
                s.failures,
                s.counterexamples
            ));
        }
        let mut files = vec![("expansive.csv".to_string(), csv)];
        if !r.counterexamples.is_empty() {
            files.push((
                "expansive_counterexamples.json".into(),
                pretty(&to_value(&r.counterexamples)),
            ));
            for (k, c) in r.counterexamples.iter().take(BUNDLE_LIMIT).enumerate() {
                let span = (0.0, opts.horizon);
                let tx = integrate(&self.model, &c.evaluation.forward.x, span, opts.tol)?;
                let ty = integrate(&self.model, &c.evaluation.forward.y, span, opts.tol)?;
                files.push((format!("counterexample_{k}_x.csv"), tx.to_csv()));
                files.push((format!("counterexample_{k}_y.csv"), ty.to_csv()));
            }
            files.push(plots::counterexample(self.model.dim));
        }
        Ok((r.passed(), to_value(&r), files))
    }

    fn chaos(&self) -> Outcome<Step> {
        let c = &self.cfg.chaos;
        let r = chaos_probe(&self.model, self.sample()?, c.n_points, &c.options)?;
        let mut csv = String::from("point_index,future,past,witnessed\n");
        let opt = |v: Option<f64>| v.map(|t| format!("{t:.17e}")).unwrap_or_default();
        for p in &r.points {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                p.point_index,
                opt(p.future),
                opt(p.past),
                p.witnessed
            ));
        }
        Ok((
            r.witness_fraction >= c.min_fraction,
            to_value(&r),
            vec![("chaos.csv".into(), csv)],
        ))
    }

    pub fn sweep_config(&self) -> SweepConfig {
        let cfg = &self.cfg;
        let on = |name: &str| cfg.robust.checks.iter().any(|c| c == name);
        let a = &cfg.attractor;
        SweepConfig {
            d_s: cfg.d_s,
            seed: cfg.seed,
            tol: cfg.tol,
            seed_point: self.seed_point(),
            transient: a.transient,
            sample_size: a.sample_size,
            spacing: a.spacing,
            trap: cfg.trap.clone().filter(|_| on("trap")),
            singularities: if on("classify") {
                cfg.singularities.clone()
            } else {
                Vec::new()
            },
            dissipativity_q: on("dissipativity").then_some(cfg.dissipativity.q),
            cone: on("cones").then(|| ConeCheck {
                a: cfg.cones.a,
                t: cfg.cones.t,
                n_points: cfg.cones.n_points,
            }),
            expansion: on("expansion").then(|| ExpansionCheck {
                t: cfg.expansion.t,
                n_points: cfg.expansion.n_points,
            }),
            growth: (on("growth") && !cfg.sections.is_empty()).then(|| GrowthCheck {
                sections: cfg.sections.clone(),
                n_pairs: cfg.growth.n_pairs,
                offset: cfg.growth.offset,
                n_returns: cfg.growth.n_returns,
                min_median: cfg.growth.min_median,
                separation: cfg.growth.separation,
            }),
            expansive: on("expansive").then(|| cfg.expansive.clone()),
            chaos: on("chaos").then(|| ChaosCheck {
                options: cfg.chaos.options.clone(),
                n_points: cfg.chaos.n_points,
                min_fraction: cfg.chaos.min_fraction,
            }),
        }
    }

    fn robust(&self) -> Outcome<Step> {
        let c = &self.cfg.robust;
        let known = [
            "trap",
            "classify",
            "dissipativity",
            "cones",
            "expansion",
            "growth",
            "expansive",
            "chaos",
        ];
        if let Some(u) = c.checks.iter().find(|k| !known.contains(&k.as_str())) {
            return Err(Failure::Config(format!(
                "robust.checks: unknown check \"{u}\""
            )));
        }
        let perturbations: Vec<Perturbation> = c
            .seeds
            .iter()
            .map(|&seed| Perturbation {
                relative_magnitude: c.magnitude,
                seed,
                mode: c.mode,
            })
            .collect();
        let r = robustness_sweep(&self.model, &perturbations, &self.sweep_config())?;
        Ok((
            r.all_pass,
            to_value(&r),
            vec![("robust.csv".into(), summary_csv(&r))],
        ))
    }
}

type Step = (bool, Value, Vec<(String, String)>);

#[derive(Serialize)]
struct ClassifyReport {
    search_lo: Vec<f64>,
    search_hi: Vec<f64>,
    equilibria: Vec<EquilibriumReport>,
    /// The configured singularities after Newton polishing.
    singularities: Vec<EquilibriumReport>,
}

#[derive(Serialize)]
struct PoincareReport {
    requested: usize,
    records: usize,
    /// Records that returned with plane residual below `max_residual`.
    returned: usize,
    fraction: f64,
    max_residual: f64,
    tau_min: Option<f64>,
    tau_q01: Option<f64>,
    tau_median: Option<f64>,
    tau_q99: Option<f64>,
    tau_max: Option<f64>,
}

impl PoincareReport {
    fn new(records: &[ReturnRecord], n: usize, max_residual: f64) -> Self {
        let ok = |r: &&ReturnRecord| !r.miss && r.plane_residual.is_some_and(|e| e < max_residual);
        let returned = records.iter().filter(ok).count();
        let taus: Vec<f64> = records.iter().filter_map(|r| r.tau).collect();
        let q = |p: f64| (!taus.is_empty()).then(|| percentile(&taus, p));
        PoincareReport {
            requested: n,
            records: records.len(),
            returned,
            fraction: returned as f64 / n.max(1) as f64,
            max_residual,
            tau_min: q(0.0),
            tau_q01: q(1.0),
            tau_median: q(50.0),
            tau_q99: q(99.0),
            tau_max: q(100.0),
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

pub fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

/// `n` points at evenly spaced indices of the sample.
fn evenly(sample: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let n = n.min(sample.len());
    (0..n)
        .map(|i| sample[i * sample.len() / n].clone())
        .collect()
}
