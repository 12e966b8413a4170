use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::alignment::{DatasetHeader, FeatureDims};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Face,
    Background,
    Audio,
    Text,
}

impl Modality {
    pub const ALL: [Modality; 4] = [
        Modality::Face,
        Modality::Background,
        Modality::Audio,
        Modality::Text,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Face => "face",
            Modality::Background => "background",
            Modality::Audio => "audio",
            Modality::Text => "text",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Modality::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown modality '{s}' (expected face, background, audio or text)"
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_face: usize,
    pub d_bg: usize,
    pub d_audio: usize,
    pub vocab_size: usize,
    pub d_text: usize,
    /// LSTM hidden size per direction.
    pub h: usize,
    /// Attention key/query width.
    pub d_k: usize,
    /// Width of each bilinear interaction feature and of each `S_i`.
    pub d_z: usize,
    pub mlp_hidden: usize,
    pub n: usize,
    /// Modality whose channel is zeroed and whose fusion pairs are removed.
    pub dropped: Option<Modality>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_face: 16,
            d_bg: 16,
            d_audio: 24,
            vocab_size: 64,
            d_text: 16,
            h: 16,
            d_k: 16,
            d_z: 16,
            mlp_hidden: 32,
            n: 70,
            dropped: None,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("d_face", self.d_face),
            ("d_bg", self.d_bg),
            ("d_audio", self.d_audio),
            ("vocab_size", self.vocab_size),
            ("d_text", self.d_text),
            ("h", self.h),
            ("d_k", self.d_k),
            ("d_z", self.d_z),
            ("mlp_hidden", self.mlp_hidden),
            ("n", self.n),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Validation(format!("model config: {name} must be at least 1")));
        }
        Ok(())
    }

    /// Input width of a modality channel.
    pub fn input_dim(&self, m: Modality) -> usize {
        match m {
            Modality::Face => self.d_face,
            Modality::Background => self.d_bg,
            Modality::Audio => self.d_audio,
            Modality::Text => self.d_text,
        }
    }

    pub fn feature_dims(&self) -> FeatureDims {
        FeatureDims {
            face: self.d_face,
            background: self.d_bg,
            audio: self.d_audio,
        }
    }

    /// Takes input widths, vocabulary and length from a dataset header.
    pub fn with_header(mut self, header: &DatasetHeader) -> Self {
        self.d_face = header.d_face;
        self.d_bg = header.d_bg;
        self.d_audio = header.d_audio;
        self.vocab_size = header.vocab_size;
        self.n = header.n;
        self
    }

    pub fn is_active(&self, m: Modality) -> bool {
        self.dropped != Some(m)
    }
}
