//! Finite-difference verification of the full network gradient.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::alignment::{AlignedSequence, FeatureRecord, PersonalityVector};
use crate::error::Result;
use crate::model::{FusionNet, ModelConfig};
use crate::seed::substream;
use crate::tensor::{ParameterSet, Tape};

/// Gradients smaller than this are too close to zero for a meaningful
/// relative error and are judged by the absolute tolerance alone.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub trials: usize,
    pub seed: u64,
    /// Central-difference step.
    pub eps: f64,
    /// Entries pass when the absolute error is below this...
    pub abs_tol: f64,
    /// ...or the relative error is below this.
    pub rel_tol: f64,
    /// LSTM hidden size of every sampled model.
    pub h: usize,
    /// Sequence length of every sampled model.
    pub n: usize,
    /// Upper bound for the sampled input and layer widths.
    pub max_dim: usize,
    pub batch: usize,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            trials: 100,
            seed: 0,
            eps: 1e-5,
            abs_tol: 1e-8,
            rel_tol: 1e-4,
            h: 2,
            n: 4,
            max_dim: 4,
            batch: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckFailure {
    pub trial: usize,
    pub parameter: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    pub checked: usize,
    pub max_abs_error: f64,
    /// Largest relative error among entries whose gradient magnitude is at
    /// least [`REL_ERROR_FLOOR`].
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub trials: usize,
    pub checked: usize,
    /// Entries whose ± perturbations cross a ReLU kink.
    pub skipped_kinks: usize,
    /// Keyed by layer: embed, lstm, attn, bilinear, fusion, mix, head.
    pub layers: BTreeMap<String, LayerStats>,
    pub failures: Vec<GradcheckFailure>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.checked > 0
    }

    pub fn max_rel_error(&self) -> f64 {
        self.layers.values().map(|l| l.max_rel_error).fold(0.0, f64::max)
    }
}

/// Draws a random small model: fixed `h` and `n`, every width in `1..=max_dim`.
pub fn random_config(cfg: &GradcheckConfig, rng: &mut impl Rng) -> ModelConfig {
    let mut dim = || rng.gen_range(1..=cfg.max_dim.max(1));
    ModelConfig {
        d_face: dim(),
        d_bg: dim(),
        d_audio: dim(),
        vocab_size: dim() + 1,
        d_text: dim(),
        h: cfg.h,
        d_k: dim(),
        d_z: dim(),
        mlp_hidden: dim(),
        n: cfg.n,
        dropped: None,
    }
}

/// A labeled sequence with `1..=n` valid records and random contents.
pub fn random_sequence(model: &ModelConfig, rng: &mut impl Rng) -> AlignedSequence {
    let valid = rng.gen_range(1..=model.n);
    let mut v = |d: usize| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
    let records: Vec<FeatureRecord> = (0..valid)
        .map(|_| FeatureRecord {
            token_id: 0,
            face: v(model.d_face),
            background: v(model.d_bg),
            audio: v(model.d_audio),
            is_pad: false,
        })
        .collect();
    let records = records
        .into_iter()
        .map(|mut r| {
            r.token_id = rng.gen_range(0..model.vocab_size);
            r
        })
        .collect();
    let label = PersonalityVector::new(std::array::from_fn(|_| rng.gen_range(0.0..1.0)))
        .expect("label in range");
    AlignedSequence::from_valid(records, model.n, model.feature_dims(), Some(label))
        .expect("consistent dims")
}

fn layer_of(name: &str) -> String {
    name.split('.').next().unwrap_or(name).to_string()
}

fn loss_and_pattern(
    net: &FusionNet,
    params: &ParameterSet,
    batch: &[&AlignedSequence],
) -> Result<(f64, Vec<bool>)> {
    let mut tape = Tape::new();
    let vars = tape.bind(params);
    let loss = net.batch_loss(&mut tape, &vars, batch)?;
    Ok((tape.value(loss).data()[0], tape.relu_pattern()))
}

/// Compares the analytic gradient of every parameter entry with a central
/// difference, over `trials` random models, parameters and batches.
pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let mut report = GradcheckReport {
        trials: cfg.trials,
        ..GradcheckReport::default()
    };
    for trial in 0..cfg.trials {
        let mut rng = substream(cfg.seed, "gradcheck", &[trial as u64]);
        let model = random_config(cfg, &mut rng);
        let net = FusionNet::new(model.clone())?;
        let mut params = net.init_params(&mut rng);
        // move biases and scales off their initial constants
        for v in params.values_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
        let seqs: Vec<AlignedSequence> =
            (0..cfg.batch).map(|_| random_sequence(&model, &mut rng)).collect();
        let batch: Vec<&AlignedSequence> = seqs.iter().collect();
        let (_, grad) = net.loss_and_gradient(&params, &batch)?;
        let flat = params.flatten();
        let mut probe = params.clone();
        let mut offset = 0;
        let names: Vec<String> = params.names().to_vec();
        let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        for (name, size) in names.iter().zip(sizes) {
            let layer = layer_of(name);
            for j in 0..size {
                let i = offset + j;
                let mut shifted = flat.clone();
                shifted[i] = flat[i] + cfg.eps;
                probe.assign_flat(&shifted)?;
                let (plus, pat_plus) = loss_and_pattern(&net, &probe, &batch)?;
                shifted[i] = flat[i] - cfg.eps;
                probe.assign_flat(&shifted)?;
                let (minus, pat_minus) = loss_and_pattern(&net, &probe, &batch)?;
                if pat_plus != pat_minus {
                    report.skipped_kinks += 1;
                    continue;
                }
                let numeric = (plus - minus) / (2.0 * cfg.eps);
                let analytic = grad[i];
                let abs = (analytic - numeric).abs();
                let scale = analytic.abs().max(numeric.abs());
                let rel = abs / scale;
                let stats = report.layers.entry(layer.clone()).or_default();
                stats.checked += 1;
                stats.max_abs_error = stats.max_abs_error.max(abs);
                if scale >= REL_ERROR_FLOOR {
                    stats.max_rel_error = stats.max_rel_error.max(rel);
                }
                report.checked += 1;
                if !(abs < cfg.abs_tol || rel < cfg.rel_tol) {
                    report.failures.push(GradcheckFailure {
                        trial,
                        parameter: name.clone(),
                        index: j,
                        analytic,
                        numeric,
                    });
                }
            }
            offset += size;
        }
    }
    Ok(report)
}
