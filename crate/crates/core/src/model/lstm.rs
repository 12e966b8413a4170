use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Weights of one LSTM direction. Gates are stacked input, forget,
/// candidate, output along the rows.
#[derive(Clone, Copy, Debug)]
pub struct LstmDirection {
    /// `4h × d`
    pub wx: Var,
    /// `4h × h`
    pub wh: Var,
    /// `4h × 1`
    pub b: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct BiLstmLayer {
    pub forward: LstmDirection,
    pub backward: LstmDirection,
}

/// Runs both directions over the columns of `x` (`d × T`) and returns
/// `2h × T`, forward states on top of backward states.
pub fn bilstm_forward(tape: &mut Tape, x: Var, layer: &BiLstmLayer) -> Result<Var> {
    let fwd = run_direction(tape, x, &layer.forward, false)?;
    let bwd = run_direction(tape, x, &layer.backward, true)?;
    tape.concat(&[fwd, bwd], 0)
}

fn run_direction(tape: &mut Tape, x: Var, dir: &LstmDirection, reverse: bool) -> Result<Var> {
    let steps = tape.shape(x)[1];
    let four_h = tape.shape(dir.wh)[0];
    let h = four_h / 4;
    if tape.shape(dir.wh) != [four_h, h] || tape.shape(dir.b) != [four_h, 1] {
        return Err(Error::shape("lstm", tape.shape(dir.wh), tape.shape(dir.b)));
    }
    // Input projections for all steps at once, bias broadcast across columns.
    let proj = tape.matmul(dir.wx, x)?;
    let ones = tape.leaf(Tensor::ones(vec![1, steps]));
    let bias = tape.matmul(dir.b, ones)?;
    let pre_x = tape.add(proj, bias)?;

    let mut hidden = tape.leaf(Tensor::zeros(vec![h, 1]));
    let mut cell = tape.leaf(Tensor::zeros(vec![h, 1]));
    let mut outputs = vec![hidden; steps];
    let order: Vec<usize> = if reverse {
        (0..steps).rev().collect()
    } else {
        (0..steps).collect()
    };
    for t in order {
        let xt = tape.column(pre_x, t)?;
        let rec = tape.matmul(dir.wh, hidden)?;
        let pre = tape.add(xt, rec)?;
        let hc = tape.lstm_cell(pre, cell)?;
        hidden = tape.slice(hc, 0, 0, h)?;
        cell = tape.slice(hc, 0, h, h)?;
        outputs[t] = hidden;
    }
    tape.concat(&outputs, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// Scalar-loop reference LSTM over the given column order.
    fn reference(x: &Tensor, wx: &Tensor, wh: &Tensor, b: &Tensor, order: &[usize]) -> Vec<Vec<f64>> {
        let h = wh.cols();
        let d = x.rows();
        let mut hs = vec![0.0; h];
        let mut cs = vec![0.0; h];
        let mut out = vec![vec![0.0; h]; x.cols()];
        for &t in order {
            let gate = |g: usize, r: usize| {
                let row = g * h + r;
                let mut s = b.at(row, 0);
                for k in 0..d {
                    s += wx.at(row, k) * x.at(k, t);
                }
                for (k, hk) in hs.iter().enumerate() {
                    s += wh.at(row, k) * hk;
                }
                s
            };
            let mut nh = vec![0.0; h];
            for r in 0..h {
                let i = sig(gate(0, r));
                let f = sig(gate(1, r));
                let g = gate(2, r).tanh();
                let o = sig(gate(3, r));
                cs[r] = f * cs[r] + i * g;
                nh[r] = o * cs[r].tanh();
            }
            hs = nh;
            out[t] = hs.clone();
        }
        out
    }

    fn layer_on(tape: &mut Tape, ws: &[Tensor; 6]) -> BiLstmLayer {
        let v: Vec<Var> = ws.iter().map(|w| tape.leaf(w.clone())).collect();
        BiLstmLayer {
            forward: LstmDirection { wx: v[0], wh: v[1], b: v[2] },
            backward: LstmDirection { wx: v[3], wh: v[4], b: v[5] },
        }
    }

    #[test]
    fn matches_reference_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (d, h, steps) = (3, 2, 2);
        let x = rand_tensor(&mut rng, &[d, steps]);
        let ws = [
            rand_tensor(&mut rng, &[4 * h, d]),
            rand_tensor(&mut rng, &[4 * h, h]),
            rand_tensor(&mut rng, &[4 * h, 1]),
            rand_tensor(&mut rng, &[4 * h, d]),
            rand_tensor(&mut rng, &[4 * h, h]),
            rand_tensor(&mut rng, &[4 * h, 1]),
        ];
        let mut tape = Tape::new();
        let layer = layer_on(&mut tape, &ws);
        let xv = tape.leaf(x.clone());
        let out = bilstm_forward(&mut tape, xv, &layer).unwrap();
        let out = tape.value(out).clone();
        assert_eq!(out.shape(), &[2 * h, steps]);
        let fwd = reference(&x, &ws[0], &ws[1], &ws[2], &[0, 1]);
        let bwd = reference(&x, &ws[3], &ws[4], &ws[5], &[1, 0]);
        for t in 0..steps {
            for r in 0..h {
                assert!((out.at(r, t) - fwd[t][r]).abs() < 1e-10);
                assert!((out.at(h + r, t) - bwd[t][r]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn single_step_uses_same_input_both_ways() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (d, h) = (2, 3);
        let x = rand_tensor(&mut rng, &[d, 1]);
        let a = [
            rand_tensor(&mut rng, &[4 * h, d]),
            rand_tensor(&mut rng, &[4 * h, h]),
            rand_tensor(&mut rng, &[4 * h, 1]),
        ];
        // identical weights in both directions give identical halves
        let ws = [a[0].clone(), a[1].clone(), a[2].clone(), a[0].clone(), a[1].clone(), a[2].clone()];
        let mut tape = Tape::new();
        let layer = layer_on(&mut tape, &ws);
        let xv = tape.leaf(x);
        let out = bilstm_forward(&mut tape, xv, &layer).unwrap();
        let out = tape.value(out);
        for r in 0..h {
            assert_eq!(out.at(r, 0), out.at(h + r, 0));
        }
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let (d, h, steps) = (3, 4, 5);
        let ws = [
            Tensor::zeros(vec![4 * h, d]),
            Tensor::zeros(vec![4 * h, h]),
            Tensor::zeros(vec![4 * h, 1]),
            Tensor::zeros(vec![4 * h, d]),
            Tensor::zeros(vec![4 * h, h]),
            Tensor::zeros(vec![4 * h, 1]),
        ];
        let mut tape = Tape::new();
        let layer = layer_on(&mut tape, &ws);
        let xv = tape.leaf(Tensor::ones(vec![d, steps]));
        let out = bilstm_forward(&mut tape, xv, &layer).unwrap();
        assert!(tape.value(out).data().iter().all(|&v| v == 0.0));
    }
}
