use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde_json::Value;

use gsaf::adapt::{similarity_matrix_csv, History};
use gsaf::alignment::{load_dataset, write_dataset, Dataset};
use gsaf::data::{adjusted_rand_index, generate, kmeans_domains, Corpus, GeneratorSpec, SplitPlan};
use gsaf::gradcheck::{run_gradcheck, GradcheckConfig};
use gsaf::harness::{
    evaluate_split, modality_ablation, run_experiment_on, source_count_sweep, ExperimentConfig,
    ExperimentSummary, Method,
};
use gsaf::model::{load_checkpoint, FusionNet, Modality};
use gsaf::{Error, Result};

#[derive(Parser)]
#[command(name = "gsaf", version, about = "Multimodal trait prediction with multi-source few-shot adaptation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Overrides {
    /// Override a config field, e.g. `--set adapt.alpha=0.01`. Values are
    /// parsed as JSON when possible, otherwise taken as strings.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
    /// Weight sources uniformly instead of by similarity.
    #[arg(long)]
    no_similarity: bool,
    /// Use a constant learning rate.
    #[arg(long)]
    no_adaptive_lr: bool,
    /// Zero one modality: face, background, audio or text.
    #[arg(long, value_name = "MODALITY")]
    drop: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-domain dataset.
    Generate {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Cluster videos into domains by their words.
    Cluster {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write a copy of the dataset with domains replaced by clusters.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Leave-one-domain-out adaptation sweep.
    TrainAdapt(ExperimentArgs),
    /// The same sweep with the pretrain-then-fine-tune baseline.
    TrainFinetune(ExperimentArgs),
    /// Score a saved model on the test part of a split.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        split: PathBuf,
    },
    /// Finite-difference check of the network gradient.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Build the target-by-source similarity matrix from a sweep directory.
    Simmatrix {
        #[arg(long)]
        history: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrain with each modality (or one) removed.
    AblateModality {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Modality to drop; all four plus the full model when omitted.
        #[arg(long = "only")]
        only: Option<String>,
    },
    /// Vary the number of source domains.
    SweepSources {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Comma-separated source counts.
        #[arg(long, value_delimiter = ',', required = true)]
        counts: Vec<usize>,
    },
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if !node.is_object() {
            if node.is_null() {
                *node = Value::Object(Default::default());
            } else {
                return Err(Error::Validation(format!("--set {key}: '{part}' is not inside an object")));
            }
        }
        let map = node.as_object_mut().expect("object");
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert(Value::Null);
    }
    Ok(())
}

fn apply_overrides(root: &mut Value, overrides: &Overrides) -> Result<()> {
    for item in &overrides.set {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::Validation(format!("--set expects KEY=VALUE, got '{item}'")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(root, key, value)?;
    }
    Ok(())
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

fn load_config<T: DeserializeOwned>(path: Option<&Path>, overrides: &Overrides) -> Result<T> {
    let mut value = match path {
        Some(p) => read_json(p)?,
        None => Value::Object(Default::default()),
    };
    apply_overrides(&mut value, overrides)?;
    serde_json::from_value(value).map_err(|e| Error::Validation(format!("config: {e}")))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn experiment(args: &ExperimentArgs, method: Option<Method>) -> Result<(ExperimentConfig, Corpus)> {
    let mut cfg: ExperimentConfig = load_config(Some(&args.config), &args.overrides)?;
    if let Some(m) = method {
        cfg.method = m;
    }
    cfg.ablation.no_similarity |= args.no_similarity;
    cfg.ablation.no_adaptive_lr |= args.no_adaptive_lr;
    if let Some(d) = &args.drop {
        cfg.ablation.drop = Some(d.parse::<Modality>()?);
    }
    // a relative dataset path is resolved against the config file
    let dataset = cfg
        .dataset
        .clone()
        .ok_or_else(|| Error::Validation("config has no dataset path".into()))?;
    let dataset = match args.config.parent() {
        Some(dir) if dataset.is_relative() => dir.join(dataset),
        _ => dataset,
    };
    if let (Some(out), Some(dir)) = (&cfg.out_dir, args.config.parent()) {
        if out.is_relative() {
            cfg.out_dir = Some(dir.join(out));
        }
    }
    let corpus = Corpus::from_dataset(&load_dataset(&dataset)?)?;
    Ok((cfg, corpus))
}

fn summarize(summary: &ExperimentSummary) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(&summary.aggregate)?);
    if let Some(f) = summary.aggregate.failures.iter().find(|f| f.kind == "divergence") {
        return Err(Error::Divergence(format!("target {}: {}", f.target, f.message)));
    }
    if let Some(f) = summary.aggregate.failures.first() {
        return Err(Error::Validation(format!("target {}: {}", f.target, f.message)));
    }
    Ok(())
}

fn similarity_from_dir(dir: &Path) -> Result<String> {
    let io = |p: &Path, e| Error::Io {
        path: p.to_path_buf(),
        source: e,
    };
    let mut entries = Vec::new();
    let mut domains = 0;
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("meta.json").is_file())
        .collect();
    subdirs.sort();
    for sub in subdirs {
        let meta = read_json(&sub.join("meta.json"))?;
        let target = meta["target"]
            .as_u64()
            .ok_or_else(|| Error::Validation(format!("{}: bad meta.json", sub.display())))?
            as usize;
        let sources: Vec<usize> = meta["sources"]
            .as_array()
            .map(|a| a.iter().filter_map(|v| v.as_u64().map(|x| x as usize)).collect())
            .unwrap_or_default();
        domains = domains.max(target + 1).max(sources.iter().map(|s| s + 1).max().unwrap_or(0));
        let mut files: Vec<PathBuf> = fs::read_dir(&sub)
            .map_err(|e| io(&sub, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("history_seed") && n.ends_with(".csv"))
            })
            .collect();
        files.sort();
        let mut sums = vec![0.0; sources.len()];
        for f in &files {
            let text = fs::read_to_string(f).map_err(|e| io(f, e))?;
            let means = History::from_csv(&text)?.mean_similarities();
            for (s, m) in sums.iter_mut().zip(means) {
                *s += m;
            }
        }
        if !files.is_empty() {
            for (i, &s) in sources.iter().enumerate() {
                entries.push((target, s, sums[i] / files.len() as f64));
            }
        }
    }
    Ok(similarity_matrix_csv(domains, &entries))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            spec,
            out,
            overrides,
        } => {
            let spec: GeneratorSpec = load_config(spec.as_deref(), &overrides)?;
            let corpus = generate(&spec)?;
            write_dataset(&corpus.to_dataset(), &out)?;
            let videos: usize = corpus.domains.iter().map(|d| d.len()).sum();
            eprintln!("wrote {videos} videos in {} domains to {}", corpus.domains.len(), out.display());
        }
        Command::Cluster {
            input,
            k,
            seed,
            out,
        } => {
            let data = load_dataset(&input)?;
            let seqs: Vec<_> = data.entries.iter().map(|e| &e.sequence).collect();
            let clusters = kmeans_domains(&seqs, data.header.vocab_size, k, seed)?;
            let current: Vec<usize> = data.entries.iter().map(|e| e.domain).collect();
            let mut sizes = BTreeMap::new();
            for &c in &clusters {
                *sizes.entry(c).or_insert(0usize) += 1;
            }
            let summary = serde_json::json!({
                "k": k,
                "sizes": sizes.values().collect::<Vec<_>>(),
                "ari_vs_existing_domains": adjusted_rand_index(&clusters, &current)?,
                "assignments": clusters,
            });
            println!("{}", serde_json::to_string(&summary)?);
            if let Some(out) = out {
                let mut relabeled: Dataset = data.clone();
                for (e, &c) in relabeled.entries.iter_mut().zip(&clusters) {
                    e.domain = c;
                }
                write_dataset(&relabeled, &out)?;
            }
        }
        Command::TrainAdapt(args) => {
            let (cfg, corpus) = experiment(&args, Some(Method::Adapt))?;
            summarize(&run_experiment_on(&corpus, &cfg)?)?;
        }
        Command::TrainFinetune(args) => {
            let (cfg, corpus) = experiment(&args, Some(Method::Finetune))?;
            summarize(&run_experiment_on(&corpus, &cfg)?)?;
        }
        Command::Eval { model, data, split } => {
            let (cfg, params) = load_checkpoint(&model)?;
            let net = FusionNet::new(cfg)?;
            let corpus = Corpus::from_dataset(&load_dataset(&data)?)?;
            let plan = SplitPlan::read(&split)?;
            let report = evaluate_split(&net, &params, &corpus, &plan)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Gradcheck {
            config,
            trials,
            overrides,
        } => {
            let mut cfg: GradcheckConfig = load_config(config.as_deref(), &overrides)?;
            if let Some(t) = trials {
                cfg.trials = t;
            }
            let report = run_gradcheck(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if !report.passed() {
                return Err(Error::Validation(format!(
                    "{} gradient entries disagree with finite differences",
                    report.failures.len()
                )));
            }
        }
        Command::Simmatrix { history, out } => {
            write_file(&out, &similarity_from_dir(&history)?)?;
        }
        Command::AblateModality { exp, only } => {
            let (cfg, corpus) = experiment(&exp, None)?;
            let drops: Vec<String> = match only {
                Some(m) => vec![m],
                None => Modality::ALL.iter().map(|m| m.to_string()).collect(),
            };
            let mut table = Vec::new();
            if drops.len() > 1 {
                let mut full = cfg.clone();
                full.out_dir = cfg.out_dir.as_ref().map(|d| d.join("full"));
                let s = run_experiment_on(&corpus, &full)?;
                table.push(serde_json::json!({ "dropped": null, "report": s.aggregate.mean }));
            }
            for d in drops {
                let s = modality_ablation(&corpus, &cfg, &d)?;
                table.push(serde_json::json!({ "dropped": d, "report": s.aggregate.mean }));
            }
            println!("{}", serde_json::to_string_pretty(&table)?);
        }
        Command::SweepSources { exp, counts } => {
            let (cfg, corpus) = experiment(&exp, None)?;
            let report = source_count_sweep(&corpus, &cfg, &counts)?;
            print!("{}", report.to_csv());
            eprintln!("spearman(count, accuracy) = {}", report.spearman);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Divergence(_) => ExitCode::from(3),
                e if e.is_validation() => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
