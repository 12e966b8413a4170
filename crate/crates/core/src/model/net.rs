use rand::Rng;

use super::attention::{self_attention, SelfAttentionLayer};
use super::bilinear::{bilinear_fuse, BilinearFusionLayer};
use super::config::{Modality, ModelConfig};
use super::head::{AggregationHead, Mlp};
use super::lstm::{bilstm_forward, BiLstmLayer, LstmDirection};
use crate::alignment::{AlignedSequence, PersonalityVector};
use crate::error::{Error, Result};
use crate::tensor::{FlatGradient, ParameterSet, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug)]
enum Init {
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    Glorot { fan_in: usize, fan_out: usize },
    Zeros,
    Ones,
    /// Zeros except `+1.0` on the forget-gate block of an LSTM bias.
    ForgetBias,
}

struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

/// Parameter indices of every layer, in [`ParameterSet`] order.
#[derive(Clone, Debug)]
struct Layout {
    embed: usize,
    lstm: [[usize; 6]; 4],
    attention: [[usize; 4]; 4],
    bilinear: [[Option<usize>; 4]; 4],
    fusion: [[usize; 4]; 4],
    mixing: [usize; 4],
    head: [usize; 4],
}

/// Intermediate results of one forward pass.
pub struct ForwardOutput {
    /// Modality inputs `X_i`, `d_i × n`.
    pub inputs: [Var; 4],
    /// Bi-LSTM outputs over the valid prefix, `2h × valid_len`.
    pub features: [Var; 4],
    /// Attention summaries `U_i`, `2h × 1`.
    pub pooled: [Var; 4],
    /// Cross-modal features `Z^i`, `d_z × 1`.
    pub fused: [Var; 4],
    /// Normalized modality summaries `S_i`, `d_z × 1`.
    pub summaries: [Var; 4],
    /// Trait scores, `5 × 1`.
    pub scores: Var,
}

/// The trait predictor: per-modality Bi-LSTM, temporal self-attention,
/// pairwise bilinear fusion and an aggregation head.
///
/// The network itself is stateless; parameters live in a [`ParameterSet`]
/// created by [`FusionNet::init_params`] and are bound to a tape per pass.
#[derive(Clone, Debug)]
pub struct FusionNet {
    cfg: ModelConfig,
    layout: Layout,
    specs_shapes: Vec<(String, Vec<usize>)>,
}

impl FusionNet {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let (layout, specs) = plan(&cfg);
        Ok(FusionNet {
            cfg,
            layout,
            specs_shapes: specs.into_iter().map(|s| (s.name, s.shape)).collect(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn total_count(&self) -> usize {
        self.specs_shapes
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }

    /// Fresh parameters: Glorot-uniform matrices, zero biases, forget-gate
    /// bias of one, unit per-timestep attention scaling.
    pub fn init_params(&self, rng: &mut impl Rng) -> ParameterSet {
        let (_, specs) = plan(&self.cfg);
        let mut params = ParameterSet::new();
        for spec in specs {
            let count: usize = spec.shape.iter().product();
            let data = match spec.init {
                Init::Glorot { fan_in, fan_out } => {
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    (0..count).map(|_| rng.gen_range(-limit..limit)).collect()
                }
                Init::Zeros => vec![0.0; count],
                Init::Ones => vec![1.0; count],
                Init::ForgetBias => {
                    let h = count / 4;
                    (0..count)
                        .map(|i| if (h..2 * h).contains(&i) { 1.0 } else { 0.0 })
                        .collect()
                }
            };
            params.push(spec.name, Tensor::new(spec.shape, data).expect("planned shape"));
        }
        params
    }

    /// A correctly shaped parameter set with every value zero.
    pub fn zero_params(&self) -> ParameterSet {
        let mut params = ParameterSet::new();
        for (name, shape) in &self.specs_shapes {
            params.push(name.clone(), Tensor::zeros(shape.clone()));
        }
        params
    }

    /// Checks that a parameter set was built for this network.
    pub fn check_params(&self, params: &ParameterSet) -> Result<()> {
        let ok = params.len() == self.specs_shapes.len()
            && params
                .iter()
                .zip(&self.specs_shapes)
                .all(|((name, t), (sn, ss))| name == sn && t.shape() == ss.as_slice());
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(
                "parameter set does not match the model configuration".into(),
            ))
        }
    }

    pub fn bilstm_layer(&self, vars: &[Var], m: Modality) -> BiLstmLayer {
        let l = self.layout.lstm[m.index()];
        BiLstmLayer {
            forward: LstmDirection {
                wx: vars[l[0]],
                wh: vars[l[1]],
                b: vars[l[2]],
            },
            backward: LstmDirection {
                wx: vars[l[3]],
                wh: vars[l[4]],
                b: vars[l[5]],
            },
        }
    }

    pub fn attention_layer(&self, vars: &[Var], m: Modality) -> SelfAttentionLayer {
        let a = self.layout.attention[m.index()];
        SelfAttentionLayer {
            wq: vars[a[0]],
            wk: vars[a[1]],
            wv: vars[a[2]],
            w: vars[a[3]],
        }
    }

    pub fn fusion_layer(&self, vars: &[Var]) -> BilinearFusionLayer {
        let mut interactions = [[None; 4]; 4];
        for (a, row) in self.layout.bilinear.iter().enumerate() {
            for (j, idx) in row.iter().enumerate() {
                interactions[a][j] = idx.map(|i| vars[i]);
            }
        }
        BilinearFusionLayer {
            interactions,
            mlps: self.layout.fusion.map(|f| mlp_from(vars, f)),
        }
    }

    pub fn head(&self, vars: &[Var]) -> AggregationHead {
        AggregationHead {
            mixing: self.layout.mixing.map(|i| vars[i]),
            mlp: mlp_from(vars, self.layout.head),
        }
    }

    /// Builds the four `d_i × n` channel inputs. Face, background and audio
    /// pass through; text is a lookup in the token embedding table. A dropped
    /// modality is all zeros.
    pub fn embed_modalities(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        seq: &AlignedSequence,
    ) -> Result<[Var; 4]> {
        let cfg = &self.cfg;
        if seq.len() != cfg.n {
            return Err(Error::Validation(format!(
                "sequence has {} records, model expects {}",
                seq.len(),
                cfg.n
            )));
        }
        if seq.dims() != cfg.feature_dims() {
            return Err(Error::Validation(format!(
                "sequence dims {:?} do not match model dims {:?}",
                seq.dims(),
                cfg.feature_dims()
            )));
        }
        let mut out = Vec::with_capacity(4);
        for m in Modality::ALL {
            let d = cfg.input_dim(m);
            let x = if !cfg.is_active(m) {
                tape.leaf(Tensor::zeros(vec![d, cfg.n]))
            } else if m == Modality::Text {
                let ids: Vec<usize> = seq.token_ids().collect();
                if let Some(&bad) = ids.iter().find(|&&t| t >= cfg.vocab_size) {
                    return Err(Error::Validation(format!(
                        "token id {bad} >= vocab_size {}",
                        cfg.vocab_size
                    )));
                }
                tape.gather_cols(vars[self.layout.embed], &ids)?
            } else {
                let mut data = vec![0.0; d * cfg.n];
                for (t, rec) in seq.records().iter().enumerate() {
                    let src = match m {
                        Modality::Face => &rec.face,
                        Modality::Background => &rec.background,
                        _ => &rec.audio,
                    };
                    for (r, &v) in src.iter().enumerate() {
                        data[r * cfg.n + t] = v;
                    }
                }
                tape.leaf(Tensor::new(vec![d, cfg.n], data)?)
            };
            out.push(x);
        }
        Ok([out[0], out[1], out[2], out[3]])
    }

    /// Full forward pass for one sequence. Only the first `valid_len` records
    /// influence the result.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        seq: &AlignedSequence,
    ) -> Result<ForwardOutput> {
        let cfg = &self.cfg;
        let valid = seq.valid_len();
        if valid == 0 {
            return Err(Error::Validation(
                "cannot predict from a sequence with no valid records".into(),
            ));
        }
        let inputs = self.embed_modalities(tape, vars, seq)?;
        let two_h = 2 * cfg.h;
        let mut features = inputs;
        let mut pooled = inputs;
        for m in Modality::ALL {
            let i = m.index();
            let x = if valid < cfg.n {
                tape.slice(inputs[i], 1, 0, valid)?
            } else {
                inputs[i]
            };
            features[i] = bilstm_forward(tape, x, &self.bilstm_layer(vars, m))?;
            expect_shape(tape, features[i], &[two_h, valid], "bi-lstm output")?;
            let att = self_attention(tape, features[i], &self.attention_layer(vars, m), valid)?;
            pooled[i] = att.pooled;
            expect_shape(tape, pooled[i], &[two_h, 1], "attention summary")?;
        }
        let fused = bilinear_fuse(tape, &features, &self.fusion_layer(vars), valid, cfg.dropped)?;
        for &z in &fused {
            expect_shape(tape, z, &[cfg.d_z, 1], "fused feature")?;
        }
        let head = self.head(vars).forward(tape, &pooled, &fused)?;
        expect_shape(tape, head.scores, &[5, 1], "trait scores")?;
        Ok(ForwardOutput {
            inputs,
            features,
            pooled,
            fused,
            summaries: head.summaries,
            scores: head.scores,
        })
    }

    pub fn predict(&self, params: &ParameterSet, seq: &AlignedSequence) -> Result<PersonalityVector> {
        let mut tape = Tape::new();
        let vars = tape.bind(params);
        let out = self.forward(&mut tape, &vars, seq)?;
        let s = tape.value(out.scores).data();
        PersonalityVector::new([s[0], s[1], s[2], s[3], s[4]])
    }

    /// Records the mean-squared-error loss of a labeled batch and returns the
    /// scalar loss node.
    pub fn batch_loss(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        batch: &[&AlignedSequence],
    ) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let mut scores = Vec::with_capacity(batch.len());
        let mut target = vec![0.0; 5 * batch.len()];
        for (b, seq) in batch.iter().enumerate() {
            let label = seq
                .label
                .ok_or_else(|| Error::Validation("training example without a label".into()))?;
            for (k, &y) in label.scores().iter().enumerate() {
                target[k * batch.len() + b] = y;
            }
            scores.push(self.forward(tape, vars, seq)?.scores);
        }
        let preds = tape.concat(&scores, 1)?;
        tape.mse(preds, &Tensor::new(vec![5, batch.len()], target)?)
    }

    pub fn loss(&self, params: &ParameterSet, batch: &[&AlignedSequence]) -> Result<f64> {
        let mut tape = Tape::new();
        let vars = tape.bind(params);
        let loss = self.batch_loss(&mut tape, &vars, batch)?;
        Ok(tape.value(loss).data()[0])
    }

    /// Batch loss and its gradient with respect to every parameter.
    pub fn loss_and_gradient(
        &self,
        params: &ParameterSet,
        batch: &[&AlignedSequence],
    ) -> Result<(f64, FlatGradient)> {
        let mut tape = Tape::new();
        let vars = tape.bind(params);
        let loss = self.batch_loss(&mut tape, &vars, batch)?;
        let grads = tape.backward(loss)?;
        let value = tape.value(loss).data()[0];
        Ok((value, FlatGradient::from_tensors(&grads.collect(&vars))))
    }
}

fn mlp_from(vars: &[Var], idx: [usize; 4]) -> Mlp {
    Mlp {
        w1: vars[idx[0]],
        b1: vars[idx[1]],
        w2: vars[idx[2]],
        b2: vars[idx[3]],
    }
}

fn expect_shape(tape: &Tape, v: Var, shape: &[usize], what: &'static str) -> Result<()> {
    if tape.shape(v) != shape {
        return Err(Error::shape(what, tape.shape(v), shape));
    }
    Ok(())
}

fn plan(cfg: &ModelConfig) -> (Layout, Vec<ParamSpec>) {
    let mut specs: Vec<ParamSpec> = Vec::new();
    let mut add = |name: String, shape: Vec<usize>, init: Init| {
        let init = match init {
            Init::Glorot { fan_in: 0, .. } => Init::Glorot {
                fan_in: shape[1],
                fan_out: shape[0],
            },
            other => other,
        };
        specs.push(ParamSpec { name, shape, init });
        specs.len() - 1
    };
    // fan sizes are taken from the shape unless given explicitly
    const GLOROT: Init = Init::Glorot {
        fan_in: 0,
        fan_out: 0,
    };
    let h = cfg.h;
    let two_h = 2 * h;
    let embed = add("embed.table".into(), vec![cfg.vocab_size, cfg.d_text], GLOROT);
    let lstm = Modality::ALL.map(|m| {
        let d = cfg.input_dim(m);
        let mut idx = [0; 6];
        for (k, dir) in ["fwd", "bwd"].iter().enumerate() {
            idx[3 * k] = add(format!("lstm.{m}.{dir}.wx"), vec![4 * h, d], GLOROT);
            idx[3 * k + 1] = add(format!("lstm.{m}.{dir}.wh"), vec![4 * h, h], GLOROT);
            idx[3 * k + 2] = add(format!("lstm.{m}.{dir}.b"), vec![4 * h, 1], Init::ForgetBias);
        }
        idx
    });
    let attention = Modality::ALL.map(|m| {
        [
            add(format!("attn.{m}.wq"), vec![cfg.d_k, two_h], GLOROT),
            add(format!("attn.{m}.wk"), vec![cfg.d_k, two_h], GLOROT),
            add(format!("attn.{m}.wv"), vec![two_h, two_h], GLOROT),
            add(format!("attn.{m}.w"), vec![two_h, cfg.n], Init::Ones),
        ]
    });
    let mut bilinear = [[None; 4]; 4];
    for a in Modality::ALL {
        for j in Modality::ALL.into_iter().filter(|&j| j != a) {
            // each stacked 2h×2h block uses its own fan sizes
            bilinear[a.index()][j.index()] = Some(add(
                format!("bilinear.{a}.{j}"),
                vec![cfg.d_z * two_h, two_h],
                Init::Glorot {
                    fan_in: two_h,
                    fan_out: two_h,
                },
            ));
        }
    }
    let fusion = Modality::ALL.map(|m| {
        [
            add(format!("fusion.{m}.w1"), vec![cfg.d_z, 3 * cfg.d_z], GLOROT),
            add(format!("fusion.{m}.b1"), vec![cfg.d_z, 1], Init::Zeros),
            add(format!("fusion.{m}.w2"), vec![cfg.d_z, cfg.d_z], GLOROT),
            add(format!("fusion.{m}.b2"), vec![cfg.d_z, 1], Init::Zeros),
        ]
    });
    let mixing = Modality::ALL.map(|m| {
        add(format!("mix.{m}"), vec![cfg.d_z, two_h + cfg.d_z], GLOROT)
    });
    let head = [
        add("head.w1".into(), vec![cfg.mlp_hidden, 4 * cfg.d_z], GLOROT),
        add("head.b1".into(), vec![cfg.mlp_hidden, 1], Init::Zeros),
        add("head.w2".into(), vec![5, cfg.mlp_hidden], GLOROT),
        add("head.b2".into(), vec![5, 1], Init::Zeros),
    ];
    (
        Layout {
            embed,
            lstm,
            attention,
            bilinear,
            fusion,
            mixing,
            head,
        },
        specs,
    )
}
