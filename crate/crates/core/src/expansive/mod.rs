//! Adversarial experiments on orbit pairs: time-warp matching, the
//! expansiveness and chaos probes, and robustness sweeps over perturbed models.

mod chaos;
mod probe;
mod robust;
mod warp;

pub use chaos::{chaos_probe, separation_time, ChaosOptions, ChaosReport, Direction, PointWitness};
pub use probe::{
    evaluate_pair, expansiveness_probe, on_stable_leaf, replay_pair, DeltaSummary,
    ExpansivenessReport, PairEvaluation, PairOutcome, ProbeOptions, Stratum,
};
pub use robust::{
    check_model, robustness_sweep, summary_csv, ChaosCheck, ConeCheck, ExpansionCheck, GrowthCheck,
    RobustReport, SweepConfig, SweepRow, TrapCheck, MAX_SWEEP_MAGNITUDE,
};
pub use warp::{
    match_orbits, same_orbit_shift, GridOrbit, MatchParams, MatchResult, Verdict, Warp, WarpSearch,
};
