use serde::{Deserialize, Serialize};

use super::chaos::{chaos_probe, ChaosOptions};
use super::probe::{expansiveness_probe, PairOutcome, ProbeOptions};
use crate::equilibria::{
    classify_equilibrium, polish_equilibrium, strong_dissipativity, DissipativityOptions,
};
use crate::error::{Error, Result};
use crate::flow::{attractor_sample, trap_check, Region, TrapOptions};
use crate::model::{Perturbation, VectorFieldModel};
use crate::section::{growth_batch, section_from_config, GrowthOptions, SectionConfig};
use crate::splitting::{cone_invariance, sectional_expansion, ConeOptions, ExpansionOptions};

/// Largest relative perturbation a sweep accepts.
pub const MAX_SWEEP_MAGNITUDE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapCheck {
    pub region: Region,
    pub n_boundary: usize,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeCheck {
    pub a: f64,
    pub t: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionCheck {
    pub t: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthCheck {
    pub sections: Vec<SectionConfig>,
    pub n_pairs: usize,
    pub offset: f64,
    pub n_returns: usize,
    /// Required median of all per-return growth factors.
    pub min_median: f64,
    /// Every series must exceed this leaf distance.
    pub separation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosCheck {
    pub options: ChaosOptions,
    pub n_points: usize,
    pub min_fraction: f64,
}

/// Shared settings for every check re-run on each perturbed model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub d_s: usize,
    pub seed: u64,
    pub tol: f64,
    pub seed_point: Vec<f64>,
    pub transient: f64,
    pub sample_size: usize,
    pub spacing: f64,
    pub trap: Option<TrapCheck>,
    /// Initial guesses for the singularities that must be Lorenz-like.
    pub singularities: Vec<Vec<f64>>,
    pub dissipativity_q: Option<f64>,
    pub cone: Option<ConeCheck>,
    pub expansion: Option<ExpansionCheck>,
    pub growth: Option<GrowthCheck>,
    pub expansive: Option<ProbeOptions>,
    pub chaos: Option<ChaosCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model_id: String,
    pub check: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustReport {
    pub perturbations: Vec<Perturbation>,
    pub model_ids: Vec<String>,
    pub rows: Vec<SweepRow>,
    pub all_pass: bool,
    pub counterexamples: Vec<(String, PairOutcome)>,
}

/// Summary table with header `check,model_id,pass`.
pub fn summary_csv(report: &RobustReport) -> String {
    let mut s = String::from("check,model_id,pass\n");
    for r in &report.rows {
        s.push_str(&format!("{},{},{}\n", r.check, r.model_id, r.pass));
    }
    s
}

fn row(model: &VectorFieldModel, check: &str, outcome: Result<(bool, String)>) -> SweepRow {
    let (pass, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    SweepRow {
        model_id: model.id.clone(),
        check: check.into(),
        pass,
        detail,
    }
}

fn evenly(sample: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let n = n.min(sample.len());
    (0..n)
        .map(|i| sample[i * sample.len() / n].clone())
        .collect()
}

fn growth_check(
    model: &VectorFieldModel,
    g: &GrowthCheck,
    cfg: &SweepConfig,
) -> Result<(bool, String)> {
    let sections = g
        .sections
        .iter()
        .enumerate()
        .map(|(i, c)| section_from_config(c, model, i))
        .collect::<Result<Vec<_>>>()?;
    let opts = GrowthOptions {
        d_s: cfg.d_s,
        delta_sep: g.separation,
        ..GrowthOptions::default()
    };
    let b = growth_batch(
        model,
        &sections,
        &cfg.seed_point,
        cfg.transient,
        g.n_pairs,
        g.offset,
        g.n_returns,
        &opts,
    )?;
    let pass = b.median_factor > g.min_median && b.separated == b.pairs;
    Ok((
        pass,
        format!(
            "median factor {:.4}, separated {}/{}",
            b.median_factor, b.separated, b.pairs
        ),
    ))
}

/// Runs every configured check on one model; rows in a fixed order.
pub fn check_model(
    model: &VectorFieldModel,
    cfg: &SweepConfig,
) -> (Vec<SweepRow>, Vec<PairOutcome>) {
    let mut rows = Vec::new();
    let mut cex = Vec::new();
    if let Some(t) = &cfg.trap {
        let opts = TrapOptions {
            seed: cfg.seed,
            tol: cfg.tol,
            ..TrapOptions::default()
        };
        let r = trap_check(model, &t.region, t.n_boundary, t.horizon, &opts)
            .map(|r| (r.passed, format!("{} violations", r.violations.len())));
        rows.push(row(model, "trap", r));
    }
    for (k, guess) in cfg.singularities.iter().enumerate() {
        let r = polish_equilibrium(model, guess)
            .and_then(|p| classify_equilibrium(model, &p, cfg.d_s))
            .map(|e| {
                (
                    e.hyperbolic && e.lorenz_like,
                    format!("index {}, lorenz_like {}", e.index, e.lorenz_like),
                )
            });
        rows.push(row(model, &format!("classify[{k}]"), r));
    }
    let sample = match attractor_sample(
        model,
        &cfg.seed_point,
        cfg.transient,
        cfg.sample_size,
        cfg.spacing,
        cfg.tol,
    ) {
        Ok(s) => s,
        Err(e) => {
            rows.push(row(model, "sample", Err(e)));
            return (rows, cex);
        }
    };
    if let Some(q) = cfg.dissipativity_q {
        let opts = DissipativityOptions {
            seed: cfg.seed,
            guesses: cfg.singularities.clone(),
            ..DissipativityOptions::standard()
        };
        let r = strong_dissipativity(model, cfg.d_s, q, &sample, &opts)
            .map(|r| (r.pass, format!("cond_b sup {:.4}", r.cond_b.sup)));
        rows.push(row(model, "dissipativity", r));
    }
    if let Some(c) = &cfg.cone {
        let opts = ConeOptions {
            seed: cfg.seed,
            ..ConeOptions::default()
        };
        let r = cone_invariance(
            model,
            &evenly(&sample, c.n_points),
            cfg.d_s,
            c.a,
            c.t,
            &opts,
        )
        .map(|r| {
            let pass = r.pass_fraction == 1.0 && r.worst_margin > 0.0;
            (
                pass,
                format!(
                    "pass fraction {}, worst margin {:.3e}",
                    r.pass_fraction, r.worst_margin
                ),
            )
        });
        rows.push(row(model, "cones", r));
    }
    if let Some(e) = &cfg.expansion {
        let opts = ExpansionOptions {
            seed: cfg.seed,
            ..ExpansionOptions::default()
        };
        let r = sectional_expansion(model, &evenly(&sample, e.n_points), cfg.d_s, e.t, &opts)
            .map(|r| (r.pass, format!("theta {:.4}", r.theta)));
        rows.push(row(model, "expansion", r));
    }
    if let Some(g) = &cfg.growth {
        rows.push(row(model, "growth", growth_check(model, g, cfg)));
    }
    if let Some(p) = &cfg.expansive {
        let r = expansiveness_probe(model, &sample, p).map(|r| {
            let pass = r.passed();
            let summary = r.summary.clone();
            cex = r.counterexamples;
            (pass, summary)
        });
        rows.push(row(model, "expansive", r));
    }
    if let Some(c) = &cfg.chaos {
        let r = chaos_probe(model, &sample, c.n_points, &c.options).map(|r| {
            (
                r.witness_fraction >= c.min_fraction,
                format!("witness fraction {}", r.witness_fraction),
            )
        });
        rows.push(row(model, "chaos", r));
    }
    (rows, cex)
}

/// Re-runs every configured check on each perturbed model.
pub fn robustness_sweep(
    model: &VectorFieldModel,
    perturbations: &[Perturbation],
    cfg: &SweepConfig,
) -> Result<RobustReport> {
    if let Some(p) = perturbations
        .iter()
        .find(|p| !(p.relative_magnitude <= MAX_SWEEP_MAGNITUDE))
    {
        return Err(Error::Precondition(format!(
            "perturbation magnitude {} exceeds {MAX_SWEEP_MAGNITUDE}",
            p.relative_magnitude
        )));
    }
    let models = perturbations
        .iter()
        .map(|p| model.perturb(p))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut counterexamples = Vec::new();
    for m in &models {
        let (r, cex) = check_model(m, cfg);
        rows.extend(r);
        counterexamples.extend(cex.into_iter().map(|o| (m.id.clone(), o)));
    }
    Ok(RobustReport {
        perturbations: perturbations.to_vec(),
        model_ids: models.iter().map(|m| m.id.clone()).collect(),
        all_pass: rows.iter().all(|r| r.pass),
        rows,
        counterexamples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PerturbationMode;

    fn small_config() -> SweepConfig {
        SweepConfig {
            d_s: 1,
            seed: 4,
            tol: 1e-9,
            seed_point: vec![1.0, 1.0, 1.0],
            transient: 30.0,
            sample_size: 300,
            spacing: 0.1,
            trap: None,
            singularities: vec![vec![0.0, 0.0, 0.0]],
            dissipativity_q: Some(1.2),
            cone: Some(ConeCheck {
                a: 0.5,
                t: 2.0,
                n_points: 10,
            }),
            expansion: None,
            growth: None,
            expansive: Some(ProbeOptions {
                delta_grid: vec![0.001],
                n_pairs: 8,
                ..ProbeOptions::default()
            }),
            chaos: Some(ChaosCheck {
                options: ChaosOptions::default(),
                n_points: 4,
                min_fraction: 1.0,
            }),
        }
    }

    #[test]
    fn zero_magnitude_reproduces_the_base_model() {
        let m = VectorFieldModel::lorenz_classic();
        let cfg = small_config();
        let p = Perturbation {
            relative_magnitude: 0.0,
            seed: 11,
            mode: PerturbationMode::ParameterScale,
        };
        let sweep = robustness_sweep(&m, &[p], &cfg).unwrap();
        let (rows, _) = check_model(&m, &cfg);
        assert_eq!(sweep.rows, rows);
        assert!(sweep.all_pass, "{:?}", sweep.rows);
        let csv = summary_csv(&sweep);
        assert!(csv.starts_with("check,model_id,pass\n"));
        assert_eq!(csv.lines().count(), rows.len() + 1);
    }

    #[test]
    fn large_perturbations_are_rejected() {
        let m = VectorFieldModel::lorenz_classic();
        let p = Perturbation {
            relative_magnitude: 0.06,
            seed: 1,
            mode: PerturbationMode::ParameterScale,
        };
        assert!(matches!(
            robustness_sweep(&m, &[p], &small_config()),
            Err(Error::Precondition(_))
        ));
    }
}
