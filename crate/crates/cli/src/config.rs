use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use sechyp::equilibria::DissipativityOptions;
use sechyp::expansive::{ChaosOptions, ProbeOptions, TrapCheck};
use sechyp::model::{ModelConfig, PerturbationMode};
use sechyp::section::{Alignment, SectionConfig};

/// One run configuration: the model fields at top level plus optional blocks
/// for every command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub model: ModelConfig,
    #[serde(default = "one")]
    pub d_s: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub attractor: AttractorConfig,
    /// Initial guesses for the singularities expected to be Lorenz-like.
    #[serde(default)]
    pub singularities: Vec<Vec<f64>>,
    #[serde(default)]
    pub sections: Vec<SectionConfig>,
    #[serde(default)]
    pub classify: ClassifyConfig,
    #[serde(default)]
    pub dissipativity: DissipativityConfig,
    #[serde(default)]
    pub trap: Option<TrapCheck>,
    #[serde(default)]
    pub cones: ConesConfig,
    #[serde(default)]
    pub expansion: ExpansionConfig,
    #[serde(default)]
    pub domination: DominationConfig,
    #[serde(default)]
    pub lyapunov: LyapunovConfig,
    #[serde(default)]
    pub poincare: PoincareConfig,
    #[serde(default)]
    pub roof: RoofConfig,
    #[serde(default)]
    pub growth: GrowthConfig,
    #[serde(default)]
    pub quotient: QuotientConfig,
    #[serde(default)]
    pub expansive: ProbeOptions,
    #[serde(default)]
    pub chaos: ChaosConfig,
    #[serde(default)]
    pub robust: RobustConfig,
}

const TOP_LEVEL_KEYS: &[&str] = &[
    "kind",
    "id",
    "dim",
    "params",
    "terms",
    "matrix",
    "d_s",
    "seed",
    "tol",
    "attractor",
    "singularities",
    "sections",
    "classify",
    "dissipativity",
    "trap",
    "cones",
    "expansion",
    "domination",
    "lyapunov",
    "poincare",
    "roof",
    "growth",
    "quotient",
    "expansive",
    "chaos",
    "robust",
];

fn one() -> usize {
    1
}

fn default_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttractorConfig {
    /// Defaults to the all-ones point.
    pub seed_point: Option<Vec<f64>>,
    pub transient: f64,
    pub sample_size: usize,
    pub spacing: f64,
}

impl Default for AttractorConfig {
    fn default() -> Self {
        AttractorConfig {
            seed_point: None,
            transient: 50.0,
            sample_size: 2000,
            spacing: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    /// Search box; defaults to the attractor sample's bounding box enlarged by 10% per side.
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
    pub n_seeds: usize,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            lo: None,
            hi: None,
            n_seeds: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DissipativityConfig {
    pub q: f64,
    pub grid: Option<GridConfig>,
    pub n_seeds: usize,
}

impl Default for DissipativityConfig {
    fn default() -> Self {
        DissipativityConfig {
            q: 1.2,
            grid: None,
            n_seeds: 200,
        }
    }
}

impl DissipativityConfig {
    pub fn options(&self, seed: u64) -> DissipativityOptions {
        DissipativityOptions {
            n_seeds: self.n_seeds,
            seed,
            grid: self
                .grid
                .as_ref()
                .map(|g| (g.lo.clone(), g.hi.clone(), g.n)),
            ..DissipativityOptions::standard()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConesConfig {
    pub a: f64,
    pub t: f64,
    pub n_points: usize,
    /// Boundary vectors sampled per point.
    pub samples: usize,
    /// Optional sweep over apertures × times.
    pub grid_apertures: Vec<f64>,
    pub grid_times: Vec<f64>,
}

impl Default for ConesConfig {
    fn default() -> Self {
        ConesConfig {
            a: 0.5,
            t: 2.0,
            n_points: 1000,
            samples: 50,
            grid_apertures: Vec::new(),
            grid_times: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpansionConfig {
    pub t: f64,
    pub n_points: usize,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        ExpansionConfig {
            t: 10.0,
            n_points: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DominationConfig {
    pub t: f64,
    pub n_points: usize,
}

impl Default for DominationConfig {
    fn default() -> Self {
        DominationConfig {
            t: 2.0,
            n_points: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovConfig {
    pub t: f64,
    pub warmup: f64,
    /// Allowed gap between the exponent sum and the averaged divergence.
    pub liouville_tol: f64,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        LyapunovConfig {
            t: 1000.0,
            warmup: 0.0,
            liouville_tol: 0.02,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoincareConfig {
    pub n: usize,
    pub t1: f64,
    pub t_max: f64,
    pub max_residual: f64,
    pub min_fraction: f64,
}

impl Default for PoincareConfig {
    fn default() -> Self {
        PoincareConfig {
            n: 1000,
            t1: 0.1,
            t_max: 50.0,
            max_residual: 1e-7,
            min_fraction: 0.95,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoofConfig {
    pub n_samples: usize,
    /// Index into `singularities`.
    pub singularity: usize,
    pub n_crossings: usize,
    pub k_range: (f64, f64),
    pub min_r2: f64,
}

impl Default for RoofConfig {
    fn default() -> Self {
        RoofConfig {
            n_samples: 20,
            singularity: 0,
            n_crossings: 200,
            k_range: (2.0, 8.0),
            min_r2: 0.9,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrowthConfig {
    pub n_pairs: usize,
    pub offset: f64,
    pub n_returns: usize,
    pub min_median: f64,
    pub separation: f64,
}

impl Default for GrowthConfig {
    fn default() -> Self {
        GrowthConfig {
            n_pairs: 1000,
            offset: 1e-6,
            n_returns: 60,
            min_median: 1.2,
            separation: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuotientConfig {
    pub n_pairs: usize,
    pub offset: f64,
    pub alignment: Alignment,
    /// The run passes when the 5th-percentile factor exceeds this.
    pub min_mu: f64,
}

impl Default for QuotientConfig {
    fn default() -> Self {
        QuotientConfig {
            n_pairs: 200,
            offset: 1e-5,
            alignment: Alignment::Unstable,
            min_mu: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ChaosConfig {
    #[serde(flatten)]
    pub options: ChaosOptions,
    pub n_points: usize,
    pub min_fraction: f64,
}

impl Default for ChaosConfig {
    fn default() -> Self {
        ChaosConfig {
            options: ChaosOptions::default(),
            n_points: 200,
            min_fraction: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustConfig {
    pub magnitude: f64,
    /// Perturbation seeds; defaults to 1..=8.
    pub seeds: Vec<u64>,
    pub mode: PerturbationMode,
    /// Checks re-run on every perturbed model.
    pub checks: Vec<String>,
}

impl Default for RobustConfig {
    fn default() -> Self {
        RobustConfig {
            magnitude: 0.02,
            seeds: (1..=8).collect(),
            mode: PerturbationMode::ParameterScale,
            checks: [
                "trap",
                "classify",
                "dissipativity",
                "cones",
                "expansion",
                "growth",
                "expansive",
                "chaos",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub d_s: Option<usize>,
    pub eps: Option<f64>,
    pub delta_grid: Option<Vec<f64>>,
    pub pairs: Option<usize>,
    pub horizon: Option<f64>,
}

impl RunConfig {
    /// Parses a config document, or the config embedded in a run manifest.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut v: Value =
            serde_json::from_str(text).map_err(|e| format!("config is not valid JSON: {e}"))?;
        if v.get("tool_version").is_some() {
            v = v
                .get("config")
                .cloned()
                .ok_or("manifest lacks an embedded config")?;
        }
        let obj = v.as_object().ok_or("config must be a JSON object")?;
        let allowed: BTreeSet<&str> = TOP_LEVEL_KEYS.iter().copied().collect();
        if let Some(k) = obj.keys().find(|k| !allowed.contains(k.as_str())) {
            return Err(format!("unknown config key \"{k}\""));
        }
        let cfg: RunConfig = serde_json::from_value(v).map_err(|e| format!("config: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = o.d_s {
            self.d_s = d;
        }
        if let Some(e) = o.eps {
            self.expansive.eps = e;
        }
        if let Some(g) = &o.delta_grid {
            self.expansive.delta_grid = g.clone();
        }
        if let Some(n) = o.pairs {
            self.expansive.n_pairs = n;
            self.growth.n_pairs = n;
            self.quotient.n_pairs = n;
        }
        if let Some(h) = o.horizon {
            self.expansive.horizon = h;
            self.chaos.options.horizon = h;
        }
        // one master seed, splitting index and tolerance for every probe
        self.expansive.seed = self.seed;
        self.expansive.d_s = self.d_s;
        self.expansive.tol = self.tol;
        self.chaos.options.seed = self.seed;
        self.chaos.options.tol = self.tol;
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.model.kind.is_none() {
            return Err("config lacks the model \"kind\"".into());
        }
        if !(1e-12..=1e-3).contains(&self.tol) {
            return Err(format!("tol {} outside [1e-12, 1e-3]", self.tol));
        }
        if self.d_s == 0 {
            return Err("d_s must be at least 1".into());
        }
        let a = &self.attractor;
        if !(a.transient >= 0.0) || !(a.spacing > 0.0) || a.sample_size == 0 {
            return Err("attractor needs transient ≥ 0, spacing > 0 and sample_size ≥ 1".into());
        }
        if !(self.robust.magnitude >= 0.0) {
            return Err("robust.magnitude must be non-negative".into());
        }
        Ok(())
    }

    pub fn seed_point(&self, dim: usize) -> Vec<f64> {
        self.attractor
            .seed_point
            .clone()
            .unwrap_or_else(|| vec![1.0; dim])
    }
}

/// Parses a comma-separated list of reals.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad δ value \"{p}\": {e}"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const LORENZ: &str =
        r#"{"kind":"lorenz","params":{"sigma":10,"rho":28,"beta":2.6666666666666665}}"#;

    #[test]
    fn defaults_fill_missing_blocks() {
        let c = RunConfig::parse(LORENZ).unwrap();
        assert_eq!(c.d_s, 1);
        assert_eq!(c.tol, 1e-9);
        assert_eq!(c.cones.a, 0.5);
        assert_eq!(c.expansive.n_pairs, 1000);
        assert_eq!(c.robust.seeds.len(), 8);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"kind":"lorenz","params":{"sigma":10,"rho":28,"beta":2.6},"sedd":3}"#;
        assert!(RunConfig::parse(text).unwrap_err().contains("sedd"));
        let text =
            r#"{"kind":"lorenz","params":{"sigma":10,"rho":28,"beta":2.6},"cones":{"aperture":1}}"#;
        assert!(RunConfig::parse(text).is_err());
    }

    #[test]
    fn overrides_take_precedence() {
        let mut c = RunConfig::parse(LORENZ).unwrap();
        let o = Overrides {
            seed: Some(7),
            eps: Some(0.25),
            delta_grid: Some(vec![0.01]),
            pairs: Some(10),
            horizon: Some(60.0),
            ..Overrides::default()
        };
        c.apply(&o);
        assert_eq!(c.seed, 7);
        assert_eq!(c.expansive.seed, 7);
        assert_eq!(c.expansive.eps, 0.25);
        assert_eq!(c.expansive.delta_grid, vec![0.01]);
        assert_eq!(c.growth.n_pairs, 10);
        assert_eq!(c.chaos.options.horizon, 60.0);
    }

    #[test]
    fn manifest_embedding_is_accepted() {
        let text = format!(r#"{{"tool_version":"0.1.0","config":{LORENZ}}}"#);
        assert!(RunConfig::parse(&text).is_ok());
    }

    #[test]
    fn round_trip_is_stable() {
        let mut c = RunConfig::parse(LORENZ).unwrap();
        c.apply(&Overrides::default());
        let a = serde_json::to_string(&c).unwrap();
        let b = serde_json::to_string(&RunConfig::parse(&a).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0.001, 0.01").unwrap(), vec![0.001, 0.01]);
        assert!(parse_grid("0.1,x").is_err());
    }
}
