//! Experiments: leave-one-domain-out sweeps, ablations and metrics.

mod experiment;
mod metrics;

pub use experiment::{
    evaluate, evaluate_split, modality_ablation, run_experiment, run_experiment_on, run_seed,
    run_target, source_count_sweep, spearman, Ablation, AggregateReport, ExperimentConfig,
    ExperimentSummary, Method, MetricKind, SeedResult, SweepReport, SweepRow, TargetFailure,
    TargetResult, TargetSummary,
};
pub use metrics::{accuracy, MetricReport};
