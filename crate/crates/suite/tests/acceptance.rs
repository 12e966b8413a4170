//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p gsaf-suite --test acceptance`. Tolerances and benchmark
//! settings are fixed below; the process exits non-zero if any criterion
//! fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gsaf::adapt::{
    cosine_similarity, run_adaptation, sample_batch, AdaptConfig, DomainDataset, OptimizerKind,
    TargetDomain,
};
use gsaf::alignment::{load_dataset, write_dataset, AlignedSequence, PersonalityVector};
use gsaf::data::{
    adjusted_rand_index, generate, kmeans, make_split, Corpus, GeneratorSpec, MapOverride,
    DEFAULT_RATIO,
};
use gsaf::gradcheck::{random_config, random_sequence, run_gradcheck, GradcheckConfig};
use gsaf::harness::{accuracy, run_experiment_on, ExperimentConfig, ExperimentSummary, Method};
use gsaf::model::{load_checkpoint, save_checkpoint, FusionNet, ModelConfig};
use gsaf::seed::substream;
use gsaf::{FlatGradient, ParameterSet};

const GRADCHECK_TRIALS: usize = 100;
const GRADCHECK_REL_TOL: f64 = 1e-4;
const GRADCHECK_BUDGET: Duration = Duration::from_secs(120);
const METRIC_TOL: f64 = 1e-12;
const SIM_TOL: f64 = 1e-12;
const DEGENERACY_ITERS: usize = 50;
const PAD_SEQUENCES: usize = 200;
const BENCH_SEEDS: u64 = 5;
const BENCH_BUDGET: Duration = Duration::from_secs(15 * 60);
const MIN_TARGET_WINS: usize = 4;
const LR_ABLATION_NOISE: f64 = 0.2;
const DISCRIMINATION_SEEDS: u64 = 5;
const MIN_DISCRIMINATION_WINS: usize = 4;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let cfg = GradcheckConfig {
        trials: GRADCHECK_TRIALS,
        rel_tol: GRADCHECK_REL_TOL,
        ..GradcheckConfig::default()
    };
    let report = match run_gradcheck(&cfg) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("gradcheck failed to run: {e}")),
    };
    let elapsed = start.elapsed();
    let layers = ["lstm", "attn", "bilinear", "head"];
    let missing: Vec<&str> = layers
        .iter()
        .copied()
        .filter(|l| report.layers.get(*l).is_none_or(|s| s.checked == 0))
        .collect();
    let worst = report.max_rel_error();
    outcome(
        report.passed() && missing.is_empty() && worst < GRADCHECK_REL_TOL && elapsed < GRADCHECK_BUDGET,
        format!(
            "{} trials, {} entries, {} kinks skipped, {} mismatches, max rel err {worst:.2e}, \
             untested layers {missing:?}, {:.1}s",
            report.trials,
            report.checked,
            report.skipped_kinks,
            report.failures.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn random_vector(rng: &mut ChaCha8Rng) -> PersonalityVector {
    PersonalityVector::new(std::array::from_fn(|_| rng.gen_range(0.0..=1.0))).unwrap()
}

fn metric_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let m = rng.gen_range(1..=20);
        let preds: Vec<_> = (0..m).map(|_| random_vector(&mut rng)).collect();
        let labels: Vec<_> = (0..m).map(|_| random_vector(&mut rng)).collect();
        let report = accuracy(&preds, &labels).unwrap();
        let mut oracle = [0.0; 5];
        for (k, o) in oracle.iter_mut().enumerate() {
            let mae = preds
                .iter()
                .zip(&labels)
                .map(|(p, y)| (p.scores()[k] - y.scores()[k]).abs())
                .sum::<f64>()
                / m as f64;
            *o = 100.0 * (1.0 - mae);
            worst = worst.max((report.accuracy[k] - *o).abs());
        }
        let avg = oracle.iter().sum::<f64>() / 5.0;
        worst = worst.max((report.average_accuracy - avg).abs());
    }
    let labels: Vec<_> = (0..50).map(|_| random_vector(&mut rng)).collect();
    let perfect = accuracy(&labels, &labels).unwrap();
    let exact = perfect.average_accuracy == 100.0 && perfect.accuracy.iter().all(|&a| a == 100.0);
    outcome(
        worst <= METRIC_TOL && exact,
        format!("1000 sets, max deviation {worst:.1e}, perfect predictions exact: {exact}"),
    )
}

fn similarity_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ok = true;
    let mut worst_scale = 0.0f64;
    for _ in 0..200 {
        let len = rng.gen_range(1..50);
        let g = FlatGradient::new((0..len).map(|_| rng.gen_range(-5.0..5.0)).collect());
        let h = FlatGradient::new((0..len).map(|_| rng.gen_range(-5.0..5.0)).collect());
        ok &= cosine_similarity(&g, &g).unwrap() == 1.0;
        ok &= cosine_similarity(&g, &g.scaled(-1.0)).unwrap() == -1.0;
        let base = cosine_similarity(&g, &h).unwrap();
        for c in [1e-6, 0.37, 3.0, 1e6] {
            worst_scale = worst_scale.max((cosine_similarity(&g.scaled(c), &h).unwrap() - base).abs());
        }
    }
    let a = FlatGradient::new(vec![1.0, 2.0, 2.0]);
    let b = FlatGradient::new(vec![2.0, 1.0, 2.0]);
    let case = cosine_similarity(&a, &b).unwrap();
    let case_err = (case - 8.0 / 9.0).abs();
    outcome(
        ok && worst_scale <= SIM_TOL && case_err <= SIM_TOL,
        format!(
            "identity/reflection exact: {ok}, scale deviation {worst_scale:.1e}, \
             [1,2,2]·[2,1,2] = {case:.15} (err {case_err:.1e})"
        ),
    )
}

fn tiny_model(header: &gsaf::alignment::DatasetHeader) -> ModelConfig {
    ModelConfig {
        d_text: 3,
        h: 3,
        d_k: 3,
        d_z: 2,
        mlp_hidden: 4,
        ..ModelConfig::default()
    }
    .with_header(header)
}

fn algorithm_degeneracy() -> Outcome {
    let corpus = generate(&GeneratorSpec {
        num_domains: 2,
        videos_per_domain: 30,
        n: 8,
        d_face: 3,
        d_bg: 2,
        d_audio: 3,
        vocab_size: 12,
        min_words: 4,
        max_words: 10,
        ..GeneratorSpec::default()
    })
    .unwrap();
    let net = FusionNet::new(tiny_model(&corpus.header)).unwrap();
    let init = net.init_params(&mut ChaCha8Rng::seed_from_u64(4));
    let cfg = AdaptConfig {
        shots: 10,
        alpha: 0.05,
        inner_steps: 0,
        iterations: DEGENERACY_ITERS,
        optimizer: OptimizerKind::Sgd,
        weight_decay: 0.0,
        use_similarity: false,
        use_adaptive_lr: false,
        seed: 44,
        ..AdaptConfig::default()
    };
    let pool = DomainDataset::new(1, corpus.domains[1].examples()[..12].to_vec()).unwrap();
    let target = TargetDomain {
        shot_pool: pool.clone(),
        validation: Vec::new(),
    };
    let adapted = run_adaptation(&net, &init, &corpus.domains[..1], &target, &cfg).unwrap();

    let mut theta = init.clone();
    for iter in 0..DEGENERACY_ITERS {
        let mut rng = substream(cfg.seed, "shots", &[iter as u64]);
        let shots: Vec<&AlignedSequence> = sample_batch(pool.examples(), cfg.shots, &mut rng);
        let (_, grad) = net.loss_and_gradient(&theta, &shots).unwrap();
        for (p, g) in theta.values_mut().zip(grad.iter()) {
            *p -= cfg.alpha * g;
        }
    }
    let identical = bits(&adapted.params) == bits(&theta);
    let moved = bits(&init) != bits(&theta);
    outcome(
        identical && moved && adapted.history.records.len() == DEGENERACY_ITERS,
        format!("{DEGENERACY_ITERS} iterations, trajectories bit-identical: {identical}, parameters moved: {moved}"),
    )
}

fn bits(p: &ParameterSet) -> Vec<u64> {
    p.values().map(f64::to_bits).collect()
}

fn pad_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let gc = GradcheckConfig {
        h: 3,
        n: 10,
        max_dim: 4,
        ..GradcheckConfig::default()
    };
    let mut changed = 0;
    let mut with_pads = 0;
    for _ in 0..PAD_SEQUENCES {
        let model = random_config(&gc, &mut rng);
        let net = FusionNet::new(model.clone()).unwrap();
        let params = net.init_params(&mut rng);
        let seq = random_sequence(&model, &mut rng);
        let before = net.predict(&params, &seq).unwrap();
        let mut noisy = seq.clone();
        for r in noisy.pad_records_mut() {
            r.token_id = rng.gen_range(0..model.vocab_size);
            for v in r.face.iter_mut().chain(&mut r.background).chain(&mut r.audio) {
                *v = rng.gen_range(-10.0..10.0);
            }
        }
        if noisy.valid_len() < noisy.len() {
            with_pads += 1;
        }
        let after = net.predict(&params, &noisy).unwrap();
        let same = before
            .scores()
            .iter()
            .zip(after.scores())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            changed += 1;
        }
    }
    outcome(
        changed == 0 && with_pads > 0,
        format!("{PAD_SEQUENCES} sequences ({with_pads} with padding), predictions changed: {changed}"),
    )
}

/// Benchmark corpus and settings shared by the two benchmark criteria.
fn bench_corpus() -> Corpus {
    generate(&GeneratorSpec {
        num_domains: 6,
        videos_per_domain: 120,
        n: 16,
        d_face: 6,
        d_bg: 4,
        d_audio: 6,
        vocab_size: 32,
        min_words: 10,
        max_words: 20,
        shift_strength: 0.6,
        seed: 0,
        ..GeneratorSpec::default()
    })
    .unwrap()
}

fn bench_config(method: Method) -> ExperimentConfig {
    ExperimentConfig {
        method,
        model: ModelConfig {
            d_text: 6,
            h: 6,
            d_k: 6,
            d_z: 6,
            mlp_hidden: 12,
            ..ModelConfig::default()
        },
        adapt: AdaptConfig {
            shots: 10,
            alpha: 0.005,
            inner_lr: Some(0.005),
            iterations: 100,
            batch_size: 8,
            ..AdaptConfig::default()
        },
        seeds: (0..BENCH_SEEDS).collect(),
        ..ExperimentConfig::default()
    }
}

fn per_target(s: &ExperimentSummary) -> BTreeMap<usize, f64> {
    s.results.iter().map(|r| (r.target, r.mean.average_accuracy)).collect()
}

struct Bench {
    adapt: Option<ExperimentSummary>,
    finetune: Option<ExperimentSummary>,
    elapsed: Duration,
}

fn run_bench(corpus: &Corpus) -> Bench {
    let start = Instant::now();
    let adapt = run_experiment_on(corpus, &bench_config(Method::Adapt)).ok();
    let finetune = run_experiment_on(corpus, &bench_config(Method::Finetune)).ok();
    Bench {
        adapt,
        finetune,
        elapsed: start.elapsed(),
    }
}

fn format_targets(m: &BTreeMap<usize, f64>) -> String {
    m.values().map(|v| format!("{v:.2}")).collect::<Vec<_>>().join(" ")
}

fn benchmark_direction(bench: &Bench) -> Outcome {
    let (Some(a), Some(f)) = (&bench.adapt, &bench.finetune) else {
        return outcome(false, "a benchmark run failed".into());
    };
    let (pa, pf) = (per_target(a), per_target(f));
    if pa.len() != 6 || pf.len() != 6 || !a.aggregate.failures.is_empty() || !f.aggregate.failures.is_empty() {
        return outcome(false, "some targets failed to train".into());
    }
    let wins = pa.iter().filter(|(t, v)| **v > pf[t]).count();
    let (ma, mf) = (a.mean_accuracy().unwrap(), f.mean_accuracy().unwrap());
    outcome(
        ma >= mf && wins >= MIN_TARGET_WINS && bench.elapsed < BENCH_BUDGET,
        format!(
            "adapt {ma:.3} vs fine-tune {mf:.3}, adapt ahead on {wins}/6 targets, {:.0}s; \
             per target adapt [{}] fine-tune [{}]",
            bench.elapsed.as_secs_f64(),
            format_targets(&pa),
            format_targets(&pf)
        ),
    )
}

fn ablation_direction(corpus: &Corpus, bench: &Bench) -> Outcome {
    let Some(full) = bench.adapt.as_ref().and_then(|a| a.mean_accuracy()) else {
        return outcome(false, "full benchmark run failed".into());
    };
    let mut nosim = bench_config(Method::Adapt);
    nosim.ablation.no_similarity = true;
    let mut nolr = bench_config(Method::Adapt);
    nolr.ablation.no_adaptive_lr = true;
    let mean = |cfg: &ExperimentConfig| {
        run_experiment_on(corpus, cfg)
            .ok()
            .filter(|s| s.aggregate.failures.is_empty())
            .and_then(|s| s.mean_accuracy())
    };
    let (Some(ns), Some(nl)) = (mean(&nosim), mean(&nolr)) else {
        return outcome(false, "an ablation run failed".into());
    };
    let sim_gap = full - ns;
    let lr_gap = full - nl;
    outcome(
        sim_gap > 0.0 && lr_gap >= -LR_ABLATION_NOISE,
        format!(
            "full {full:.3}, w/o similarity {ns:.3} (gap {sim_gap:+.3}), \
             w/o adaptive lr {nl:.3} (gap {lr_gap:+.3})"
        ),
    )
}

fn similarity_discrimination() -> Outcome {
    // domain 0 is the target, 1 copies its trait map, 2 inverts it
    let corpus = generate(&GeneratorSpec {
        num_domains: 3,
        videos_per_domain: 60,
        n: 12,
        d_face: 4,
        d_bg: 3,
        d_audio: 4,
        vocab_size: 24,
        min_words: 8,
        max_words: 16,
        shift_strength: 0.6,
        map_overrides: vec![
            MapOverride::Copy { domain: 1, from: 0 },
            MapOverride::Invert { domain: 2, from: 0 },
        ],
        seed: 8,
        ..GeneratorSpec::default()
    })
    .unwrap();
    let model = ModelConfig {
        d_text: 4,
        h: 4,
        d_k: 4,
        d_z: 4,
        mlp_hidden: 8,
        ..ModelConfig::default()
    }
    .with_header(&corpus.header);
    let net = FusionNet::new(model).unwrap();
    let mut wins = 0;
    let mut pairs = Vec::new();
    for seed in 0..DISCRIMINATION_SEEDS {
        let plan = make_split(&corpus.domains[0], 10, DEFAULT_RATIO, seed).unwrap();
        let ex = corpus.domains[0].examples();
        let pick = |ids: &[usize]| ids.iter().map(|&i| ex[i].clone()).collect::<Vec<_>>();
        let target = TargetDomain {
            shot_pool: DomainDataset::new(0, pick(&plan.shots)).unwrap(),
            validation: pick(&plan.val),
        };
        let init = net.init_params(&mut substream(seed, "init", &[]));
        let cfg = AdaptConfig {
            alpha: 0.005,
            iterations: 40,
            batch_size: 16,
            seed,
            ..AdaptConfig::default()
        };
        let out = run_adaptation(&net, &init, &corpus.domains[1..], &target, &cfg).unwrap();
        let m = out.history.mean_similarities();
        if m[0] > m[1] {
            wins += 1;
        }
        pairs.push(format!("({:+.3}, {:+.3})", m[0], m[1]));
    }
    outcome(
        wins >= MIN_DISCRIMINATION_WINS,
        format!(
            "s_A > s_B in {wins}/{DISCRIMINATION_SEEDS} seeds; (s_A, s_B) per seed: {}",
            pairs.join(" ")
        ),
    )
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism_and_formats() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate(&GeneratorSpec {
        num_domains: 3,
        videos_per_domain: 24,
        n: 8,
        d_face: 3,
        d_bg: 2,
        d_audio: 3,
        vocab_size: 12,
        min_words: 4,
        max_words: 10,
        seed: 9,
        ..GeneratorSpec::default()
    })
    .unwrap();
    let data_path = dir.path().join("data.jsonl");
    write_dataset(&corpus.to_dataset(), &data_path).unwrap();
    let reloaded = load_dataset(&data_path).unwrap();
    let copy_path = dir.path().join("copy.jsonl");
    write_dataset(&reloaded, &copy_path).unwrap();
    let jsonl_ok = reloaded == corpus.to_dataset()
        && fs::read(&data_path).unwrap() == fs::read(&copy_path).unwrap();

    let run = |name: &str| {
        let cfg = ExperimentConfig {
            out_dir: Some(dir.path().join(name)),
            model: tiny_model(&corpus.header),
            adapt: AdaptConfig {
                shots: 4,
                iterations: 6,
                batch_size: 4,
                eval_every: 2,
                ..AdaptConfig::default()
            },
            seeds: vec![0, 1],
            ..ExperimentConfig::default()
        };
        run_experiment_on(&corpus, &cfg).unwrap();
        read_tree(&dir.path().join(name))
    };
    let (first, second) = (run("a"), run("b"));
    let sweep_ok = !first.is_empty() && first == second;

    let ckpt = first
        .keys()
        .find(|k| k.ends_with(".gsaf"))
        .cloned()
        .unwrap_or_default();
    let ckpt_path = dir.path().join("a").join(&ckpt);
    let checkpoint_ok = match load_checkpoint(&ckpt_path) {
        Ok((cfg, params)) => {
            let again = dir.path().join("again.gsaf");
            save_checkpoint(&again, &cfg, &params).unwrap();
            fs::read(&again).unwrap() == first[&ckpt]
        }
        Err(_) => false,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut points = Vec::new();
    let mut truth = Vec::new();
    for (c, center) in [[0.0, 0.0], [20.0, 0.0], [0.0, 20.0]].iter().enumerate() {
        for _ in 0..30 {
            points.push(vec![center[0] + rng.gen_range(-1.0..1.0), center[1] + rng.gen_range(-1.0..1.0)]);
            truth.push(c);
        }
    }
    let ari = adjusted_rand_index(&kmeans(&points, 3, 0).unwrap().assignments, &truth).unwrap();

    outcome(
        sweep_ok && jsonl_ok && checkpoint_ok && ari == 1.0,
        format!(
            "sweep rerun byte-identical over {} files: {sweep_ok}, JSONL round trip: {jsonl_ok}, \
             checkpoint round trip: {checkpoint_ok}, k-means ARI {ari}",
            first.len()
        ),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, o: Outcome| {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        if !o.passed {
            failed += 1;
        }
        println!("[{tag}] {id}. {name}: {}", o.detail);
    };
    report(1, "gradient correctness", gradient_correctness());
    report(2, "metric correctness", metric_correctness());
    report(3, "similarity algebra", similarity_algebra());
    report(4, "single-source degeneracy", algorithm_degeneracy());
    report(5, "pad invariance", pad_invariance());
    let corpus = bench_corpus();
    let bench = run_bench(&corpus);
    report(6, "benchmark direction", benchmark_direction(&bench));
    report(7, "ablation direction", ablation_direction(&corpus, &bench));
    report(8, "similarity discrimination", similarity_discrimination());
    report(9, "determinism and formats", determinism_and_formats());
    println!("{} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
