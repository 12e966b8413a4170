use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::optimizer::{OptimizerKind, DEFAULT_WEIGHT_DECAY};
use crate::alignment::AlignedSequence;
use crate::error::{Error, Result};

/// Labeled examples of one domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainDataset {
    pub domain_id: usize,
    examples: Vec<AlignedSequence>,
}

impl DomainDataset {
    pub fn new(domain_id: usize, examples: Vec<AlignedSequence>) -> Result<Self> {
        if let Some(i) = examples.iter().position(|e| e.label.is_none()) {
            return Err(Error::Validation(format!(
                "domain {domain_id}: example {i} has no label"
            )));
        }
        Ok(DomainDataset {
            domain_id,
            examples,
        })
    }

    pub fn examples(&self) -> &[AlignedSequence] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// The target side of an adaptation run: the fixed few-shot pool plus an
/// optional validation set used for early stopping.
#[derive(Clone, Debug)]
pub struct TargetDomain {
    pub shot_pool: DomainDataset,
    pub validation: Vec<AlignedSequence>,
}

/// Draws `min(size, examples.len())` distinct examples.
pub fn sample_batch<'a>(
    examples: &'a [AlignedSequence],
    size: usize,
    rng: &mut impl Rng,
) -> Vec<&'a AlignedSequence> {
    let size = size.min(examples.len());
    sample(rng, examples.len(), size)
        .into_iter()
        .map(|i| &examples[i])
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptConfig {
    /// Target examples drawn from the shot pool each iteration.
    pub shots: usize,
    /// Base learning rate of the shared-parameter update.
    pub alpha: f64,
    /// Plain SGD steps each source replica takes per iteration.
    pub inner_steps: usize,
    /// Replica step size; `alpha` when unset.
    pub inner_lr: Option<f64>,
    /// Iteration budget `N`.
    pub iterations: usize,
    pub optimizer: OptimizerKind,
    /// Decoupled decay, used by AdamW only.
    pub weight_decay: f64,
    pub use_similarity: bool,
    pub use_adaptive_lr: bool,
    /// Source examples per replica batch.
    pub batch_size: usize,
    pub seed: u64,
    /// Validation loss is computed every this many iterations.
    pub eval_every: usize,
    /// Early stopping after this many evaluations without improvement.
    pub patience: usize,
    /// Fine-tune baseline: pooled-source steps (default `iterations`).
    pub pretrain_steps: Option<usize>,
    /// Fine-tune baseline: shot steps (default `iterations`).
    pub finetune_steps: Option<usize>,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            shots: 10,
            alpha: 0.003,
            inner_steps: 1,
            inner_lr: None,
            iterations: 200,
            optimizer: OptimizerKind::Adamw,
            weight_decay: DEFAULT_WEIGHT_DECAY,
            use_similarity: true,
            use_adaptive_lr: true,
            batch_size: 16,
            seed: 0,
            eval_every: 5,
            patience: 20,
            pretrain_steps: None,
            finetune_steps: None,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(format!("adapt config: {m}")));
        if self.shots == 0 {
            return bad("shots must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be positive");
        }
        if let Some(lr) = self.inner_lr {
            if !(lr >= 0.0 && lr.is_finite()) {
                return bad("inner_lr must be non-negative");
            }
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be at least 1");
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return bad("weight_decay must be non-negative");
        }
        Ok(())
    }

    pub fn inner_lr(&self) -> f64 {
        self.inner_lr.unwrap_or(self.alpha)
    }
}
