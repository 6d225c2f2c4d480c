//! Experiment harness: metrics, random-guess baselines, orchestration of
//! train/serve/attack runs, and result emission.

mod baselines;
mod experiment;
mod metrics;
mod report;

pub use baselines::{rg_e, rg_n, rg_u};
pub use experiment::{
    attack2_on_released, prepare_data, run_experiment, run_single, train_target, Attack1Spec,
    Attack2Spec, DatasetSpec, EvalSpec, ExperimentConfig, ExplainSpec, HarnessError,
    InverseHyperConfig, ModelSpec, ResultRow, ResultTable, RunConfig, RunOutcome, Sweep,
};
pub use metrics::{l1_loss, per_feature_l1, MetricError};
pub use report::{emit_csv, emit_plotdata, read_csv, CSV_COLUMNS, PLOT_METRICS};
