use crate::error::{Error, Result};
use crate::tensor::{Tape, Var};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Temporal self-attention for one modality.
#[derive(Clone, Copy, Debug)]
pub struct SelfAttentionLayer {
    /// `d_k × 2h`
    pub wq: Var,
    /// `d_k × 2h`
    pub wk: Var,
    /// `2h × 2h`
    pub wv: Var,
    /// Per-timestep diagonal scaling, `2h × n`.
    pub w: Var,
}

pub struct AttentionOutput {
    /// Pooled modality summary, `2h × 1`.
    pub pooled: Var,
    /// Attention matrix over the valid steps, `T × T`, rows sum to 1.
    pub weights: Var,
}

/// Attends over the first `valid_len` columns of `f` (`2h × n`).
///
/// The columns are layer-normalized and projected to queries, keys and
/// values; each query row of `softmax(QᵀK / √d_k)` mixes the values into an
/// attended vector `s_t`, and the summary is `Σ_t s_t ⊙ (w_t ⊙ F_t)`.
/// Columns at or after `valid_len` never enter the computation.
pub fn self_attention(
    tape: &mut Tape,
    f: Var,
    layer: &SelfAttentionLayer,
    valid_len: usize,
) -> Result<AttentionOutput> {
    if valid_len == 0 {
        return Err(Error::InvalidArgument(
            "self-attention over an empty sequence".into(),
        ));
    }
    let [dim, n] = tape.shape(f) else {
        return Err(Error::InvalidArgument("attention input must be a matrix".into()));
    };
    let (dim, n) = (*dim, *n);
    if valid_len > n || tape.shape(layer.w)[1] < valid_len {
        return Err(Error::InvalidArgument(format!(
            "valid_len {valid_len} exceeds sequence length {n}"
        )));
    }
    let d_k = tape.shape(layer.wq)[0];
    let fv = if valid_len < n {
        tape.slice(f, 1, 0, valid_len)?
    } else {
        f
    };
    let normed = tape.layer_norm_cols(fv, LAYER_NORM_EPS)?;
    let q = tape.matmul(layer.wq, normed)?;
    let k = tape.matmul(layer.wk, normed)?;
    let v = tape.matmul(layer.wv, normed)?;
    let qt = tape.transpose(q)?;
    let scores = tape.matmul(qt, k)?;
    let scores = tape.scale(scores, 1.0 / (d_k as f64).sqrt());
    let weights = tape.softmax(scores, 1)?;
    let wt = tape.transpose(weights)?;
    let attended = tape.matmul(v, wt)?;
    let w = if tape.shape(layer.w)[1] == valid_len {
        layer.w
    } else {
        tape.slice(layer.w, 1, 0, valid_len)?
    };
    if tape.shape(w)[0] != dim {
        return Err(Error::shape("self_attention", tape.shape(w), &[dim, valid_len]));
    }
    let scaled = tape.mul(w, fv)?;
    let mixed = tape.mul(attended, scaled)?;
    let pooled = tape.sum_axis(mixed, 1)?;
    Ok(AttentionOutput { pooled, weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn setup(rng: &mut ChaCha8Rng, dim: usize, d_k: usize, n: usize) -> (Tape, SelfAttentionLayer) {
        let mut tape = Tape::new();
        let layer = SelfAttentionLayer {
            wq: tape.leaf(rand_tensor(rng, &[d_k, dim])),
            wk: tape.leaf(rand_tensor(rng, &[d_k, dim])),
            wv: tape.leaf(rand_tensor(rng, &[dim, dim])),
            w: tape.leaf(rand_tensor(rng, &[dim, n])),
        };
        (tape, layer)
    }

    #[test]
    fn single_valid_step_gets_full_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (mut tape, layer) = setup(&mut rng, 4, 3, 6);
        let f = tape.leaf(rand_tensor(&mut rng, &[4, 6]));
        let out = self_attention(&mut tape, f, &layer, 1).unwrap();
        assert_eq!(tape.value(out.weights).data(), &[1.0]);
    }

    #[test]
    fn identical_steps_attend_uniformly() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (mut tape, layer) = setup(&mut rng, 4, 3, 5);
        let col = rand_tensor(&mut rng, &[4, 1]);
        let mut data = vec![0.0; 20];
        for r in 0..4 {
            for c in 0..5 {
                data[r * 5 + c] = col.data()[r];
            }
        }
        let f = tape.leaf(Tensor::new(vec![4, 5], data).unwrap());
        let out = self_attention(&mut tape, f, &layer, 4).unwrap();
        let w = tape.value(out.weights);
        assert_eq!(w.shape(), &[4, 4]);
        for &v in w.data() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn rows_are_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mut tape, layer) = setup(&mut rng, 6, 2, 7);
        let f = tape.leaf(rand_tensor(&mut rng, &[6, 7]));
        let out = self_attention(&mut tape, f, &layer, 5).unwrap();
        let w = tape.value(out.weights);
        for r in 0..5 {
            let row: Vec<f64> = (0..5).map(|c| w.at(r, c)).collect();
            assert!(row.iter().all(|&v| v >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(tape.shape(out.pooled), &[6, 1]);
    }

    #[test]
    fn pad_columns_do_not_contribute() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let base = rand_tensor(&mut rng, &[4, 6]);
        let ws: Vec<Tensor> = [[3, 4], [3, 4], [4, 4], [4, 6]]
            .iter()
            .map(|s| rand_tensor(&mut rng, s))
            .collect();
        let run = |f: &Tensor| {
            let mut tape = Tape::new();
            let layer = SelfAttentionLayer {
                wq: tape.leaf(ws[0].clone()),
                wk: tape.leaf(ws[1].clone()),
                wv: tape.leaf(ws[2].clone()),
                w: tape.leaf(ws[3].clone()),
            };
            let fv = tape.leaf(f.clone());
            let out = self_attention(&mut tape, fv, &layer, 3).unwrap();
            tape.value(out.pooled).clone()
        };
        let before = run(&base);
        let mut perturbed = base.clone();
        for r in 0..4 {
            for c in 3..6 {
                perturbed.data_mut()[r * 6 + c] += rng.gen_range(-10.0..10.0);
            }
        }
        assert_eq!(run(&perturbed), before);
    }

    #[test]
    fn empty_sequence_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (mut tape, layer) = setup(&mut rng, 4, 3, 6);
        let f = tape.leaf(rand_tensor(&mut rng, &[4, 6]));
        assert!(self_attention(&mut tape, f, &layer, 0).is_err());
    }
}
