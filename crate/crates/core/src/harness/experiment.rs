use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, MetricReport};
use crate::adapt::{
    finetune_baseline, run_adaptation, similarity_matrix_csv, AdaptConfig, AdaptOutcome,
    DomainDataset, TargetDomain,
};
use crate::alignment::{load_dataset, AlignedSequence, PersonalityVector};
use crate::data::{make_split, Corpus, SplitPlan, DEFAULT_RATIO};
use crate::error::{Error, Result};
use crate::model::{save_checkpoint, FusionNet, Modality, ModelConfig};
use crate::seed::{derive, substream};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Similarity-weighted multi-source adaptation.
    #[default]
    Adapt,
    /// Pretrain on pooled sources, then fine-tune on the shots.
    Finetune,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    /// Weight every source by `1/k` instead of its similarity.
    pub no_similarity: bool,
    /// Constant learning rate instead of warmup and cosine decay.
    pub no_adaptive_lr: bool,
    /// Zero one modality channel and remove its fusion pairs.
    pub drop: Option<Modality>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Accuracy,
    Mse,
}

/// Everything needed to reproduce an experiment.
///
/// Each entry of `seeds` is a root seed; the split, initial parameters and
/// training randomness of a target are drawn from named substreams of it.
/// `adapt.seed` is replaced by the derived training seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: Option<PathBuf>,
    /// Artifacts are written here; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
    pub method: Method,
    pub model: ModelConfig,
    pub adapt: AdaptConfig,
    pub ablation: Ablation,
    pub seeds: Vec<u64>,
    /// Target domain ids; every domain when unset.
    pub targets: Option<Vec<usize>>,
    /// Validation to test proportion of the non-shot remainder.
    pub split_ratio: (usize, usize),
    /// Metrics listed in the aggregate summary.
    pub metrics: Vec<MetricKind>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: None,
            out_dir: None,
            method: Method::Adapt,
            model: ModelConfig::default(),
            adapt: AdaptConfig::default(),
            ablation: Ablation::default(),
            seeds: vec![0],
            targets: None,
            split_ratio: DEFAULT_RATIO,
            metrics: vec![MetricKind::Accuracy, MetricKind::Mse],
        }
    }
}

impl ExperimentConfig {
    /// Model and adaptation settings with the ablation switches applied.
    pub fn effective(&self) -> (ModelConfig, AdaptConfig) {
        let mut model = self.model.clone();
        let mut adapt = self.adapt.clone();
        if self.ablation.no_similarity {
            adapt.use_similarity = false;
        }
        if self.ablation.no_adaptive_lr {
            adapt.use_adaptive_lr = false;
        }
        if self.ablation.drop.is_some() {
            model.dropped = self.ablation.drop;
        }
        (model, adapt)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Validation("experiment needs at least one seed".into()));
        }
        let (model, adapt) = self.effective();
        model.validate()?;
        adapt.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub report: MetricReport,
    /// Training-mean similarity per source (empty for the baseline).
    pub mean_similarities: Vec<f64>,
    pub iterations_run: usize,
    pub best_iter: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetResult {
    pub target: usize,
    pub sources: Vec<usize>,
    pub method: Method,
    pub seeds: Vec<SeedResult>,
    /// Mean over seeds, with standard deviations.
    pub mean: MetricReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetFailure {
    pub target: usize,
    pub kind: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSummary {
    pub target: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub average_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy_std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse: Option<[f64; 5]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub method: Method,
    pub targets: Vec<TargetSummary>,
    /// Unweighted mean over targets; the standard deviations are across
    /// targets.
    pub mean: Option<MetricReport>,
    pub failures: Vec<TargetFailure>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSummary {
    pub results: Vec<TargetResult>,
    pub aggregate: AggregateReport,
}

impl ExperimentSummary {
    /// Mean accuracy over targets, when any target finished.
    pub fn mean_accuracy(&self) -> Option<f64> {
        self.aggregate.mean.as_ref().map(|m| m.average_accuracy)
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn failure_kind(e: &Error) -> &'static str {
    match e {
        Error::Divergence(_) => "divergence",
        e if e.is_validation() => "validation",
        _ => "error",
    }
}

/// Loads the configured dataset and runs [`run_experiment_on`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    let path = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| Error::Validation("experiment config has no dataset path".into()))?;
    let corpus = Corpus::from_dataset(&load_dataset(path)?)?;
    run_experiment_on(&corpus, cfg)
}

fn prepare(corpus: &Corpus, cfg: &ExperimentConfig) -> Result<(FusionNet, AdaptConfig, Vec<usize>)> {
    cfg.validate()?;
    let (model, adapt) = cfg.effective();
    let model = model.with_header(&corpus.header);
    let net = FusionNet::new(model)?;
    let all: Vec<usize> = corpus.domains.iter().map(|d| d.domain_id).collect();
    if all.len() < 2 {
        return Err(Error::Validation("need at least two domains".into()));
    }
    let targets = match &cfg.targets {
        Some(t) => {
            if let Some(bad) = t.iter().find(|id| !all.contains(id)) {
                return Err(Error::Validation(format!("unknown target domain {bad}")));
            }
            t.clone()
        }
        None => all,
    };
    Ok((net, adapt, targets))
}

/// Leave-one-domain-out sweep: each target in turn, all other domains as
/// sources, every seed. A failing target is recorded and skipped.
pub fn run_experiment_on(corpus: &Corpus, cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    let (net, adapt, targets) = prepare(corpus, cfg)?;
    if let Some(dir) = &cfg.out_dir {
        create_dir(dir)?;
    }
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for &t in &targets {
        let sources: Vec<usize> = corpus
            .domains
            .iter()
            .map(|d| d.domain_id)
            .filter(|&d| d != t)
            .collect();
        match run_target(corpus, cfg, &net, &adapt, t, &sources) {
            Ok(r) => results.push(r),
            Err(e) => {
                eprintln!("target {t} aborted: {e}");
                failures.push(TargetFailure {
                    target: t,
                    kind: failure_kind(&e).into(),
                    message: e.to_string(),
                });
            }
        }
    }
    let aggregate = aggregate(cfg, &results, failures)?;
    if let Some(dir) = &cfg.out_dir {
        write_json(&dir.join("aggregate.json"), &aggregate)?;
        if cfg.method == Method::Adapt {
            fs::write(dir.join("similarity.csv"), similarity_csv(corpus, &results))
                .map_err(|e| Error::io(dir.join("similarity.csv"), e))?;
        }
    }
    Ok(ExperimentSummary { results, aggregate })
}

fn aggregate(
    cfg: &ExperimentConfig,
    results: &[TargetResult],
    failures: Vec<TargetFailure>,
) -> Result<AggregateReport> {
    let want = |m| cfg.metrics.contains(&m);
    let targets = results
        .iter()
        .map(|r| TargetSummary {
            target: r.target,
            average_accuracy: want(MetricKind::Accuracy).then_some(r.mean.average_accuracy),
            accuracy_std: want(MetricKind::Accuracy).then(|| r.mean.average_std.unwrap_or(0.0)),
            mse: want(MetricKind::Mse).then_some(r.mean.mse),
        })
        .collect();
    let means: Vec<MetricReport> = results.iter().map(|r| r.mean.clone()).collect();
    let mean = if means.is_empty() {
        None
    } else {
        Some(MetricReport::mean_of(&means)?)
    };
    Ok(AggregateReport {
        method: cfg.method,
        targets,
        mean,
        failures,
    })
}

fn similarity_csv(corpus: &Corpus, results: &[TargetResult]) -> String {
    let domains = corpus.domains.iter().map(|d| d.domain_id + 1).max().unwrap_or(0);
    let mut entries = Vec::new();
    for r in results {
        let seeds = r.seeds.len() as f64;
        for (i, &s) in r.sources.iter().enumerate() {
            let mean = r
                .seeds
                .iter()
                .filter_map(|sr| sr.mean_similarities.get(i))
                .sum::<f64>()
                / seeds;
            entries.push((r.target, s, mean));
        }
    }
    similarity_matrix_csv(domains, &entries)
}

fn select(examples: &[AlignedSequence], ids: &[usize]) -> Vec<AlignedSequence> {
    ids.iter().map(|&i| examples[i].clone()).collect::<Vec<_>>()
}

/// Runs every seed of one target against the given sources.
pub fn run_target(
    corpus: &Corpus,
    cfg: &ExperimentConfig,
    net: &FusionNet,
    adapt: &AdaptConfig,
    target: usize,
    sources: &[usize],
) -> Result<TargetResult> {
    let dir = cfg.out_dir.as_ref().map(|d| d.join(format!("target_{target}")));
    if let Some(dir) = &dir {
        create_dir(dir)?;
        write_json(
            &dir.join("meta.json"),
            &serde_json::json!({ "target": target, "sources": sources }),
        )?;
    }
    let seeds = cfg
        .seeds
        .iter()
        .map(|&seed| run_seed(corpus, cfg, net, adapt, target, sources, seed, dir.as_deref()))
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<MetricReport> = seeds.iter().map(|s| s.report.clone()).collect();
    let result = TargetResult {
        target,
        sources: sources.to_vec(),
        method: cfg.method,
        mean: MetricReport::mean_of(&reports)?,
        seeds,
    };
    if let Some(dir) = &dir {
        write_json(&dir.join("report.json"), &result)?;
    }
    Ok(result)
}

/// One training run: split, initialize, train, score on the test split.
#[allow(clippy::too_many_arguments)]
pub fn run_seed(
    corpus: &Corpus,
    cfg: &ExperimentConfig,
    net: &FusionNet,
    adapt: &AdaptConfig,
    target: usize,
    sources: &[usize],
    seed: u64,
    out: Option<&Path>,
) -> Result<SeedResult> {
    let domain = corpus
        .domain(target)
        .ok_or_else(|| Error::Validation(format!("unknown target domain {target}")))?;
    let plan = make_split(domain, adapt.shots, cfg.split_ratio, derive(seed, "data", &[]))?;
    let ex = domain.examples();
    let target_data = TargetDomain {
        shot_pool: DomainDataset::new(target, select(ex, &plan.shots))?,
        validation: select(ex, &plan.val),
    };
    let source_data = sources
        .iter()
        .map(|&s| {
            corpus
                .domain(s)
                .cloned()
                .ok_or_else(|| Error::Validation(format!("unknown source domain {s}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let init = net.init_params(&mut substream(seed, "init", &[target as u64]));
    let mut train = adapt.clone();
    train.seed = derive(seed, "train", &[target as u64]);
    let outcome: AdaptOutcome = match cfg.method {
        Method::Adapt => run_adaptation(net, &init, &source_data, &target_data, &train)?,
        Method::Finetune => finetune_baseline(net, &init, &source_data, &target_data, &train)?,
    };
    let test = select(ex, &plan.test);
    let report = evaluate(net, &outcome.params, &test)?;
    if let Some(dir) = out {
        outcome.history.write_csv(dir.join(format!("history_seed{seed}.csv")))?;
        save_checkpoint(dir.join(format!("model_seed{seed}.gsaf")), net.config(), &outcome.params)?;
        plan.write(dir.join(format!("split_seed{seed}.json")))?;
    }
    Ok(SeedResult {
        seed,
        report,
        mean_similarities: outcome.history.mean_similarities(),
        iterations_run: outcome.history.records.len(),
        best_iter: outcome.history.best_iter,
    })
}

/// Scores a model on labeled examples.
pub fn evaluate(
    net: &FusionNet,
    params: &crate::tensor::ParameterSet,
    examples: &[AlignedSequence],
) -> Result<MetricReport> {
    let mut preds = Vec::with_capacity(examples.len());
    let mut labels: Vec<PersonalityVector> = Vec::with_capacity(examples.len());
    for e in examples {
        preds.push(net.predict(params, e)?);
        labels.push(
            e.label
                .ok_or_else(|| Error::Validation("evaluation example without a label".into()))?,
        );
    }
    let report = accuracy(&preds, &labels)?;
    report.validate()?;
    Ok(report)
}

/// Scores a saved model on the test part of a split.
pub fn evaluate_split(
    net: &FusionNet,
    params: &crate::tensor::ParameterSet,
    corpus: &Corpus,
    plan: &SplitPlan,
) -> Result<MetricReport> {
    let domain = corpus
        .domain(plan.target)
        .ok_or_else(|| Error::Validation(format!("dataset has no domain {}", plan.target)))?;
    plan.validate(domain.len())?;
    evaluate(net, params, &select(domain.examples(), &plan.test))
}

/// Retrains with one modality removed. Requires at least five seeds so the
/// spread across seeds is meaningful.
pub fn modality_ablation(
    corpus: &Corpus,
    cfg: &ExperimentConfig,
    drop: &str,
) -> Result<ExperimentSummary> {
    let modality: Modality = drop.parse()?;
    if cfg.seeds.len() < 5 {
        return Err(Error::Validation(format!(
            "modality ablation needs at least 5 seeds, got {}",
            cfg.seeds.len()
        )));
    }
    let mut run = cfg.clone();
    run.ablation.drop = Some(modality);
    run.out_dir = cfg.out_dir.as_ref().map(|d| d.join(format!("drop_{modality}")));
    run_experiment_on(corpus, &run)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub count: usize,
    pub target: usize,
    pub seed: u64,
    pub sources: Vec<usize>,
    pub average_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Rank correlation between source count and accuracy.
    pub spearman: f64,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("count,target,seed,average_accuracy\n");
        for r in &self.rows {
            writeln!(out, "{},{},{},{}", r.count, r.target, r.seed, r.average_accuracy).unwrap();
        }
        out
    }
}

/// For each count, trains every target against that many randomly chosen
/// sources (drawn per seed and target) and records test accuracy.
pub fn source_count_sweep(
    corpus: &Corpus,
    cfg: &ExperimentConfig,
    counts: &[usize],
) -> Result<SweepReport> {
    let (net, adapt, targets) = prepare(corpus, cfg)?;
    let pool = corpus.domains.len() - 1;
    if let Some(&c) = counts.iter().find(|&&c| c == 0 || c > pool) {
        return Err(Error::Validation(format!(
            "source count {c} must be between 1 and {pool}"
        )));
    }
    let mut rows = Vec::new();
    for &count in counts {
        for &t in &targets {
            let others: Vec<usize> = corpus
                .domains
                .iter()
                .map(|d| d.domain_id)
                .filter(|&d| d != t)
                .collect();
            for &seed in &cfg.seeds {
                let mut rng = substream(seed, "sweep", &[count as u64, t as u64]);
                let mut chosen: Vec<usize> =
                    sample(&mut rng, others.len(), count).into_iter().map(|i| others[i]).collect();
                chosen.sort_unstable();
                let r = run_seed(corpus, cfg, &net, &adapt, t, &chosen, seed, None)?;
                rows.push(SweepRow {
                    count,
                    target: t,
                    seed,
                    sources: chosen,
                    average_accuracy: r.report.average_accuracy,
                });
            }
        }
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.count as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.average_accuracy).collect();
    let report = SweepReport {
        spearman: spearman(&xs, &ys),
        rows,
    };
    if let Some(dir) = &cfg.out_dir {
        create_dir(dir)?;
        let path = dir.join("sweep.csv");
        fs::write(&path, report.to_csv()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(report)
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties; 0 when either side
/// is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = rx.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}
