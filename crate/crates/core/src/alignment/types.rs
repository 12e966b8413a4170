use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vocabulary id reserved for padding and unknown words.
pub const UNK_TOKEN: usize = 0;

/// Default standardized sequence length (words per video).
pub const DEFAULT_SEQ_LEN: usize = 70;

pub const TRAIT_NAMES: [&str; 5] = [
    "openness",
    "conscientiousness",
    "extraversion",
    "agreeableness",
    "neuroticism",
];

/// Big Five scores `[O, C, E, A, N]`, each in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 5]", into = "[f64; 5]")]
pub struct PersonalityVector([f64; 5]);

impl PersonalityVector {
    pub fn new(scores: [f64; 5]) -> Result<Self> {
        if let Some((k, v)) = scores
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::Validation(format!(
                "{} score {v} outside [0, 1]",
                TRAIT_NAMES[k]
            )));
        }
        Ok(PersonalityVector(scores))
    }

    pub fn scores(&self) -> &[f64; 5] {
        &self.0
    }
}

impl TryFrom<[f64; 5]> for PersonalityVector {
    type Error = Error;

    fn try_from(v: [f64; 5]) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PersonalityVector> for [f64; 5] {
    fn from(p: PersonalityVector) -> Self {
        p.0
    }
}

/// A transcript word with its spoken interval in seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct TimedWord {
    pub token_id: usize,
    pub start: f64,
    pub end: f64,
}

/// A feature vector covering `[start, end)` of one modality stream.
#[derive(Clone, Debug, PartialEq)]
pub struct TimedVector {
    pub start: f64,
    pub end: f64,
    pub values: Vec<f64>,
}

/// Per-modality feature widths of a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDims {
    pub face: usize,
    pub background: usize,
    pub audio: usize,
}

/// One word-anchored tuple: the token plus the face, background and audio
/// features observed while it was spoken.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRecord {
    pub token_id: usize,
    pub face: Vec<f64>,
    pub background: Vec<f64>,
    pub audio: Vec<f64>,
    pub is_pad: bool,
}

impl FeatureRecord {
    pub fn pad(dims: FeatureDims) -> Self {
        FeatureRecord {
            token_id: UNK_TOKEN,
            face: vec![0.0; dims.face],
            background: vec![0.0; dims.background],
            audio: vec![0.0; dims.audio],
            is_pad: true,
        }
    }

    pub fn dims(&self) -> FeatureDims {
        FeatureDims {
            face: self.face.len(),
            background: self.background.len(),
            audio: self.audio.len(),
        }
    }
}

/// A video as exactly `n` records: `valid_len` real words followed by pads.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedSequence {
    records: Vec<FeatureRecord>,
    valid_len: usize,
    pub label: Option<PersonalityVector>,
}

impl AlignedSequence {
    /// Builds a sequence from its valid records, padding up to `n`.
    /// Records beyond `n` are dropped.
    pub fn from_valid(
        mut valid: Vec<FeatureRecord>,
        n: usize,
        dims: FeatureDims,
        label: Option<PersonalityVector>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("sequence length must be at least 1".into()));
        }
        valid.truncate(n);
        for (i, r) in valid.iter().enumerate() {
            if r.is_pad {
                return Err(Error::Validation(format!("record {i} is marked as padding")));
            }
            if r.dims() != dims {
                return Err(Error::Validation(format!(
                    "record {i} has dims {:?}, expected {dims:?}",
                    r.dims()
                )));
            }
        }
        let valid_len = valid.len();
        valid.resize_with(n, || FeatureRecord::pad(dims));
        Ok(AlignedSequence {
            records: valid,
            valid_len,
            label,
        })
    }

    /// Checks the padding layout of a full record list and wraps it.
    pub fn from_records(
        records: Vec<FeatureRecord>,
        label: Option<PersonalityVector>,
    ) -> Result<Self> {
        let valid_len = records.iter().take_while(|r| !r.is_pad).count();
        for (i, r) in records.iter().enumerate().skip(valid_len) {
            if !r.is_pad {
                return Err(Error::Validation(format!(
                    "record {i} is not padding but follows a pad record"
                )));
            }
            let zero = |v: &[f64]| v.iter().all(|&x| x == 0.0);
            if r.token_id != UNK_TOKEN || !zero(&r.face) || !zero(&r.background) || !zero(&r.audio)
            {
                return Err(Error::Validation(format!(
                    "pad record {i} must carry the UNK token and zero features"
                )));
            }
        }
        if records.is_empty() {
            return Err(Error::Validation("sequence has no records".into()));
        }
        Ok(AlignedSequence {
            records,
            valid_len,
            label,
        })
    }

    pub fn records(&self) -> &[FeatureRecord] {
        &self.records
    }

    pub fn valid_records(&self) -> &[FeatureRecord] {
        &self.records[..self.valid_len]
    }

    /// Mutable access to pad records only; the valid prefix stays fixed.
    pub fn pad_records_mut(&mut self) -> &mut [FeatureRecord] {
        &mut self.records[self.valid_len..]
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn valid_len(&self) -> usize {
        self.valid_len
    }

    pub fn dims(&self) -> FeatureDims {
        self.records[0].dims()
    }

    pub fn token_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.records.iter().map(|r| r.token_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn personality_vector_range() {
        assert!(PersonalityVector::new([0.0, 1.0, 0.5, 0.2, 0.9]).is_ok());
        assert!(PersonalityVector::new([0.0, 1.1, 0.5, 0.2, 0.9]).is_err());
        assert!(PersonalityVector::new([f64::NAN, 0.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn from_records_rejects_interleaved_pads() {
        let dims = FeatureDims {
            face: 1,
            background: 1,
            audio: 1,
        };
        let real = FeatureRecord {
            token_id: 3,
            face: vec![1.0],
            background: vec![1.0],
            audio: vec![1.0],
            is_pad: false,
        };
        let recs = vec![real.clone(), FeatureRecord::pad(dims), real];
        assert!(AlignedSequence::from_records(recs, None).is_err());
    }
}
