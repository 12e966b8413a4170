use rand::Rng;

use super::domain::{sample_batch, AdaptConfig, DomainDataset, TargetDomain};
use super::history::{History, IterationRecord};
use super::optimizer::Optimizer;
use super::schedule::scheduled_lr;
use super::similarity::cosine_similarity;
use crate::alignment::AlignedSequence;
use crate::error::{Error, Result};
use crate::model::FusionNet;
use crate::seed::substream;
use crate::tensor::{FlatGradient, ParameterSet};

/// Learning rate of the shared update at `iter`.
pub fn adaptive_lr(iter: usize, cfg: &AdaptConfig) -> f64 {
    scheduled_lr(iter, cfg.iterations, cfg.alpha, cfg.use_adaptive_lr)
}

/// Trained parameters and the record of how they were reached.
#[derive(Clone, Debug)]
pub struct AdaptOutcome {
    pub params: ParameterSet,
    pub history: History,
}

fn check_finite(loss: f64, grad: &FlatGradient, what: impl FnOnce() -> String) -> Result<()> {
    if loss.is_finite() && grad.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence(format!("non-finite loss or gradient on {}", what())))
    }
}

/// Clones `theta` into a replica, takes `inner_steps` plain SGD steps on one
/// sampled source batch and returns the replica together with the source
/// gradient at `theta` (the first step's gradient). `theta` is not touched.
pub fn source_step(
    net: &FusionNet,
    theta: &ParameterSet,
    domain: &DomainDataset,
    cfg: &AdaptConfig,
    rng: &mut impl Rng,
) -> Result<(ParameterSet, FlatGradient)> {
    if domain.is_empty() {
        return Err(Error::Validation(format!(
            "source domain {} has no examples",
            domain.domain_id
        )));
    }
    let batch = sample_batch(domain.examples(), cfg.batch_size, rng);
    let (loss, grad) = net.loss_and_gradient(theta, &batch)?;
    check_finite(loss, &grad, || format!("source domain {}", domain.domain_id))?;
    let mut replica = theta.clone();
    if cfg.inner_steps > 0 {
        let mut sgd = Optimizer::new(super::OptimizerKind::Sgd, 0.0);
        sgd.step(&mut replica, &grad, cfg.inner_lr())?;
        for _ in 1..cfg.inner_steps {
            let (loss, g) = net.loss_and_gradient(&replica, &batch)?;
            check_finite(loss, &g, || format!("source domain {}", domain.domain_id))?;
            sgd.step(&mut replica, &g, cfg.inner_lr())?;
        }
    }
    Ok((replica, grad))
}

/// Mean shot loss through a replica and its gradient.
pub fn target_gradient(
    net: &FusionNet,
    replica: &ParameterSet,
    shots: &[&AlignedSequence],
) -> Result<(f64, FlatGradient)> {
    if shots.is_empty() {
        return Err(Error::Validation("target shot batch is empty".into()));
    }
    let (loss, grad) = net.loss_and_gradient(replica, shots)?;
    check_finite(loss, &grad, || "the target shots".to_string())?;
    Ok((loss, grad))
}

/// `Σ_i w_i · g_i` in ascending source order, with `w_i = s_i`, or `1/k`
/// when similarity weighting is off.
pub fn weighted_gradient(
    sims: &[f64],
    target_grads: &[FlatGradient],
    use_similarity: bool,
) -> Result<FlatGradient> {
    let k = target_grads.len();
    if k == 0 || sims.len() != k {
        return Err(Error::InvalidArgument(format!(
            "need one similarity per gradient, got {} and {k}",
            sims.len()
        )));
    }
    let weight = |i: usize| if use_similarity { sims[i] } else { 1.0 / k as f64 };
    let mut total = target_grads[0].scaled(weight(0));
    for (i, g) in target_grads.iter().enumerate().skip(1) {
        if g.len() != total.len() {
            return Err(Error::InvalidArgument("gradient lengths differ".into()));
        }
        total.add_scaled(weight(i), g);
    }
    Ok(total)
}

/// Shared-parameter update: the weighted target gradient is handed to the
/// optimizer at rate `lr`. With SGD this is `θ ← θ − lr Σ s_i g_i`.
pub fn adapt_update(
    theta: &mut ParameterSet,
    sims: &[f64],
    target_grads: &[FlatGradient],
    lr: f64,
    use_similarity: bool,
    optimizer: &mut Optimizer,
) -> Result<()> {
    let g = weighted_gradient(sims, target_grads, use_similarity)?;
    optimizer.step(theta, &g, lr)
}

/// Tracks the best validation loss and decides when to stop.
pub(crate) struct EarlyStopper {
    patience: usize,
    bad_evals: usize,
    best: Option<(f64, usize, ParameterSet)>,
}

impl EarlyStopper {
    pub(crate) fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            bad_evals: 0,
            best: None,
        }
    }

    /// Records an evaluation; returns true when training should stop.
    pub(crate) fn observe(&mut self, val: f64, iter: usize, theta: &ParameterSet) -> bool {
        match &self.best {
            Some((b, _, _)) if val >= *b => self.bad_evals += 1,
            _ => {
                self.best = Some((val, iter, theta.clone()));
                self.bad_evals = 0;
            }
        }
        self.bad_evals >= self.patience
    }

    /// Best parameters seen, or `theta` when nothing was evaluated.
    pub(crate) fn finish(self, theta: ParameterSet, history: &mut History) -> ParameterSet {
        match self.best {
            Some((_, iter, best)) => {
                history.best_iter = Some(iter);
                best
            }
            None => theta,
        }
    }
}

pub(crate) fn validation_loss(
    net: &FusionNet,
    theta: &ParameterSet,
    validation: &[AlignedSequence],
) -> Result<f64> {
    let refs: Vec<&AlignedSequence> = validation.iter().collect();
    let v = net.loss(theta, &refs)?;
    if !v.is_finite() {
        return Err(Error::Divergence("validation loss is not finite".into()));
    }
    Ok(v)
}

fn check_inputs(
    net: &FusionNet,
    init: &ParameterSet,
    sources: &[DomainDataset],
    target: &TargetDomain,
    cfg: &AdaptConfig,
) -> Result<()> {
    cfg.validate()?;
    net.check_params(init)?;
    if sources.is_empty() {
        return Err(Error::Validation("at least one source domain is required".into()));
    }
    if target.shot_pool.len() < cfg.shots {
        return Err(Error::Validation(format!(
            "target pool has {} examples, {} shots requested",
            target.shot_pool.len(),
            cfg.shots
        )));
    }
    if target.validation.iter().any(|v| v.label.is_none()) {
        return Err(Error::Validation("validation examples must be labeled".into()));
    }
    Ok(())
}

/// Multi-source adaptation by gradient similarity.
///
/// Each iteration draws shots from the target pool, trains one replica per
/// source, compares each replica's target gradient with its source gradient
/// and moves the shared parameters along the similarity-weighted target
/// gradients. With a validation set, training stops after `patience`
/// evaluations without improvement and the best parameters are returned.
/// All randomness derives from `cfg.seed`.
pub fn run_adaptation(
    net: &FusionNet,
    init: &ParameterSet,
    sources: &[DomainDataset],
    target: &TargetDomain,
    cfg: &AdaptConfig,
) -> Result<AdaptOutcome> {
    check_inputs(net, init, sources, target, cfg)?;
    let mut theta = init.clone();
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.weight_decay);
    let mut history = History::default();
    let mut stopper = EarlyStopper::new(cfg.patience);
    for iter in 0..cfg.iterations {
        let lr = adaptive_lr(iter, cfg);
        let mut shot_rng = substream(cfg.seed, "shots", &[iter as u64]);
        let shots = sample_batch(target.shot_pool.examples(), cfg.shots, &mut shot_rng);
        let mut sims = Vec::with_capacity(sources.len());
        let mut grads = Vec::with_capacity(sources.len());
        let mut loss_sum = 0.0;
        for (i, source) in sources.iter().enumerate() {
            let mut rng = substream(cfg.seed, "source", &[iter as u64, i as u64]);
            let (replica, g_source) = source_step(net, &theta, source, cfg, &mut rng)?;
            let (loss, g_target) = target_gradient(net, &replica, &shots)?;
            sims.push(cosine_similarity(&g_target, &g_source)?);
            grads.push(g_target);
            loss_sum += loss;
        }
        adapt_update(&mut theta, &sims, &grads, lr, cfg.use_similarity, &mut optimizer)?;
        let mut record = IterationRecord {
            iter,
            lr,
            target_loss: loss_sum / sources.len() as f64,
            val_loss: None,
            similarities: sims,
        };
        let evaluate = (iter + 1) % cfg.eval_every == 0 || iter + 1 == cfg.iterations;
        let mut stop = false;
        if evaluate && !target.validation.is_empty() {
            let v = validation_loss(net, &theta, &target.validation)?;
            record.val_loss = Some(v);
            stop = stopper.observe(v, iter, &theta);
        }
        history.records.push(record);
        if stop {
            history.stopped_early = true;
            break;
        }
    }
    let params = stopper.finish(theta, &mut history);
    Ok(AdaptOutcome { params, history })
}

/// Source-pretraining then few-shot fine-tuning, with the same optimizer,
/// schedule and early stopping as [`run_adaptation`].
pub fn finetune_baseline(
    net: &FusionNet,
    init: &ParameterSet,
    sources: &[DomainDataset],
    target: &TargetDomain,
    cfg: &AdaptConfig,
) -> Result<AdaptOutcome> {
    check_inputs(net, init, sources, target, cfg)?;
    let pooled: Vec<AlignedSequence> = sources
        .iter()
        .flat_map(|d| d.examples().iter().cloned())
        .collect();
    let mut history = History::default();
    let pretrain = cfg.pretrain_steps.unwrap_or(cfg.iterations);
    let finetune = cfg.finetune_steps.unwrap_or(cfg.iterations);
    let theta = train_phase(
        net,
        init.clone(),
        &pooled,
        cfg.batch_size,
        pretrain,
        "pretrain",
        target,
        cfg,
        &mut history,
    )?;
    let theta = train_phase(
        net,
        theta,
        target.shot_pool.examples(),
        cfg.shots,
        finetune,
        "finetune",
        target,
        cfg,
        &mut history,
    )?;
    Ok(AdaptOutcome {
        params: theta,
        history,
    })
}

#[allow(clippy::too_many_arguments)]
fn train_phase(
    net: &FusionNet,
    mut theta: ParameterSet,
    pool: &[AlignedSequence],
    batch_size: usize,
    steps: usize,
    stream: &str,
    target: &TargetDomain,
    cfg: &AdaptConfig,
    history: &mut History,
) -> Result<ParameterSet> {
    if steps == 0 {
        return Ok(theta);
    }
    if pool.is_empty() {
        return Err(Error::Validation(format!("{stream}: no training examples")));
    }
    let offset = history.records.len();
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.weight_decay);
    let mut stopper = EarlyStopper::new(cfg.patience);
    for step in 0..steps {
        let lr = scheduled_lr(step, steps, cfg.alpha, cfg.use_adaptive_lr);
        let mut rng = substream(cfg.seed, stream, &[step as u64]);
        let batch = sample_batch(pool, batch_size, &mut rng);
        let (loss, grad) = net.loss_and_gradient(&theta, &batch)?;
        check_finite(loss, &grad, || format!("{stream} batch {step}"))?;
        optimizer.step(&mut theta, &grad, lr)?;
        let mut record = IterationRecord {
            iter: offset + step,
            lr,
            target_loss: loss,
            val_loss: None,
            similarities: Vec::new(),
        };
        let mut stop = false;
        if ((step + 1) % cfg.eval_every == 0 || step + 1 == steps) && !target.validation.is_empty() {
            let v = validation_loss(net, &theta, &target.validation)?;
            record.val_loss = Some(v);
            stop = stopper.observe(v, offset + step, &theta);
        }
        history.records.push(record);
        if stop {
            history.stopped_early = true;
            break;
        }
    }
    Ok(stopper.finish(theta, history))
}
