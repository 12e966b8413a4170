//! Multi-source few-shot adaptation.

mod algorithm;
mod domain;
mod history;
mod optimizer;
mod schedule;
mod similarity;

pub use algorithm::{
    adapt_update, adaptive_lr, finetune_baseline, run_adaptation, source_step, target_gradient,
    weighted_gradient, AdaptOutcome,
};
pub use domain::{sample_batch, AdaptConfig, DomainDataset, TargetDomain};
pub use history::{similarity_matrix_csv, History, IterationRecord};
pub use optimizer::{
    Optimizer, OptimizerKind, DEFAULT_BETAS, DEFAULT_EPS, DEFAULT_WEIGHT_DECAY,
};
pub use schedule::scheduled_lr;
pub use similarity::{cosine_similarity, ZERO_NORM};
