//! Configured strategy sweeps and their reports.
//!
//! A sweep varies one parameter over a grid. At every grid point it builds
//! `replicates` random instances, computes one placement per strategy, and
//! records the closed-form metric and, with `trials > 0`, a replayed one on
//! held-out mobility.

mod config;
mod report;
mod run;
mod selftest;

pub use config::{
    parse_override, BsSettings, ContactSource, ExperimentConfig, MobilitySource, ScenarioKind, ScenarioSettings,
    Strategy, SweepParam, UtSettings,
};
pub use report::{
    emit_report, format_sig9, parse_placement_csv, placement_csv, results_csv, svg_line_chart, CSV_HEADER,
};
pub use run::{
    estimate_models, evaluate_at_base, optimize_at_base, replicate_seed, run_experiment, to_discrete, Metric, Placed,
    ResultRow,
};
pub use selftest::{selftest, Check};
