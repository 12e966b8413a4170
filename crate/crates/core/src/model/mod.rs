//! The multimodal trait predictor.

mod attention;
mod bilinear;
mod checkpoint;
mod config;
mod head;
mod lstm;
mod net;

pub use attention::{self_attention, AttentionOutput, SelfAttentionLayer, LAYER_NORM_EPS};
pub use bilinear::{bilinear_fuse, pair_interaction, BilinearFusionLayer};
pub use checkpoint::{checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint};
pub use config::{Modality, ModelConfig};
pub use head::{AggregationHead, HeadOutput, Mlp};
pub use lstm::{bilstm_forward, BiLstmLayer, LstmDirection};
pub use net::{ForwardOutput, FusionNet};
