//! Experiment configuration, evaluation metrics, the parallel experiment
//! runner and the diagnostic check suites.

mod config;
mod eval;
mod run;
mod suites;

pub use config::{
    DiagnosticsConfig, ExperimentConfig, KnapsackConfig, LossName, MulticlassConfig,
    PortfolioConfig, Study, SuiteName, TrainingConfig,
};
pub use eval::{eval_multiclass, eval_optimality_gap, GapEval, GapMode, MulticlassEval};
pub use run::{run_experiment, sidecar, ResultRow, ResultTable};
pub use suites::{
    peaked_simplex_point, records_summary, records_to_csv, run_suite, spread_simplex_point,
    suite_calibration, suite_margin_bound, suite_multiclass, suite_one_dim, suite_squared_bound,
    suite_vanishing_margin, write_records, SuiteParams, SuiteRecord, CLOSED_FORM_TOL,
    DENSITY_TOL, LOCATION_TOL,
};
