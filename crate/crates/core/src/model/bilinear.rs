use super::config::Modality;
use super::head::Mlp;
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Pairwise bilinear cross-modal fusion.
#[derive(Clone, Copy, Debug)]
pub struct BilinearFusionLayer {
    /// `interactions[a][j]` stacks `d_z` interaction matrices of size
    /// `2h × 2h` into a `(d_z·2h) × 2h` tensor. The diagonal is unused.
    pub interactions: [[Option<Var>; 4]; 4],
    /// Per-modality MLP from `3·d_z` to `d_z`.
    pub mlps: [Mlp; 4],
}

/// `Z_aj[k] = Σ_{t < valid_len} relu(F^a_tᵀ W^{aj}_k F^j_t)` as a `d_z × 1`
/// column.
pub fn pair_interaction(
    tape: &mut Tape,
    fa: Var,
    fj: Var,
    stacked: Var,
    valid_len: usize,
) -> Result<Var> {
    if tape.shape(fa) != tape.shape(fj) {
        return Err(Error::shape("bilinear", tape.shape(fa), tape.shape(fj)));
    }
    let n = tape.shape(fa)[1];
    if valid_len == 0 || valid_len > n {
        return Err(Error::InvalidArgument(format!(
            "valid_len {valid_len} outside 1..={n}"
        )));
    }
    let (fa, fj) = if valid_len < n {
        (tape.slice(fa, 1, 0, valid_len)?, tape.slice(fj, 1, 0, valid_len)?)
    } else {
        (fa, fj)
    };
    let projected = tape.matmul(stacked, fj)?;
    let per_step = tape.block_dot(fa, projected)?;
    let act = tape.relu(per_step);
    tape.sum_axis(act, 1)
}

/// Fuses each modality with the other three. When `dropped` is set, every
/// pair involving that modality contributes zeros.
pub fn bilinear_fuse(
    tape: &mut Tape,
    features: &[Var; 4],
    layer: &BilinearFusionLayer,
    valid_len: usize,
    dropped: Option<Modality>,
) -> Result<[Var; 4]> {
    let mut fused = [features[0]; 4];
    for a in 0..4 {
        let mut parts = Vec::with_capacity(3);
        for j in (0..4).filter(|&j| j != a) {
            let stacked = layer.interactions[a][j].ok_or_else(|| {
                Error::InvalidArgument(format!("missing interaction matrix ({a}, {j})"))
            })?;
            let off = dropped.is_some_and(|m| m.index() == a || m.index() == j);
            let z = if off {
                let d_z = tape.shape(stacked)[0] / tape.shape(stacked)[1];
                tape.leaf(Tensor::zeros(vec![d_z, 1]))
            } else {
                pair_interaction(tape, features[a], features[j], stacked, valid_len)?
            };
            parts.push(z);
        }
        let joined = tape.concat(&parts, 0)?;
        fused[a] = layer.mlps[a].forward(tape, joined)?;
    }
    Ok(fused)
}
