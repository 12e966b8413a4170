use crate::error::Result;
use crate::tensor::{Tape, Var};

/// Two-layer perceptron on a column vector: `W2 · relu(W1 x + b1) + b2`.
#[derive(Clone, Copy, Debug)]
pub struct Mlp {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl Mlp {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let a = tape.matmul(self.w1, x)?;
        let a = tape.add(a, self.b1)?;
        let a = tape.relu(a);
        let out = tape.matmul(self.w2, a)?;
        tape.add(out, self.b2)
    }
}

/// Mixes each modality's `[U_i; Z^i]` into a normalized summary `S_i`,
/// concatenates the four summaries and maps them to five trait scores.
#[derive(Clone, Copy, Debug)]
pub struct AggregationHead {
    /// Per-modality `d_z × (2h + d_z)` mixing matrices.
    pub mixing: [Var; 4],
    pub mlp: Mlp,
}

pub struct HeadOutput {
    pub summaries: [Var; 4],
    /// `5 × 1`, each entry in `[0, 1]`.
    pub scores: Var,
}

impl AggregationHead {
    pub fn forward(&self, tape: &mut Tape, pooled: &[Var; 4], fused: &[Var; 4]) -> Result<HeadOutput> {
        let mut summaries = [pooled[0]; 4];
        for i in 0..4 {
            let joined = tape.concat(&[pooled[i], fused[i]], 0)?;
            let mixed = tape.matmul(self.mixing[i], joined)?;
            summaries[i] = tape.softmax(mixed, 0)?;
        }
        let all = tape.concat(&summaries, 0)?;
        let logits = self.mlp.forward(tape, all)?;
        let scores = tape.sigmoid(logits);
        Ok(HeadOutput { summaries, scores })
    }
}
