use super::types::{AlignedSequence, FeatureDims, FeatureRecord, TimedVector, TimedWord};
use crate::error::{Error, Result};

/// Largest distance (seconds) between a word midpoint and the nearest stream
/// interval before alignment gives up.
pub const MAX_GAP_SECONDS: f64 = 2.0;

/// The three continuous streams sampled alongside a transcript.
pub struct ModalityStreams<'a> {
    pub face: &'a [TimedVector],
    pub background: &'a [TimedVector],
    pub audio: &'a [TimedVector],
}

/// Timestamp modality alignment.
///
/// Each word is paired with the vector from every stream whose interval holds
/// the word's midpoint, falling back to the nearest interval within
/// [`MAX_GAP_SECONDS`]. Only the first `n` words are kept; shorter transcripts
/// are padded with UNK records.
pub fn align(
    transcript: &[TimedWord],
    streams: &ModalityStreams<'_>,
    dims: FeatureDims,
    n: usize,
) -> Result<AlignedSequence> {
    if n == 0 {
        return Err(Error::InvalidArgument("sequence length must be at least 1".into()));
    }
    for (i, w) in transcript.iter().enumerate() {
        if !(w.start >= 0.0 && w.end > w.start) {
            return Err(Error::Alignment {
                word_index: i,
                reason: format!("invalid interval [{}, {})", w.start, w.end),
            });
        }
        if i > 0 && w.start < transcript[i - 1].end {
            return Err(Error::Alignment {
                word_index: i,
                reason: "words overlap or are out of order".into(),
            });
        }
    }

    let records = transcript
        .iter()
        .take(n)
        .enumerate()
        .map(|(i, w)| {
            let mid = 0.5 * (w.start + w.end);
            Ok(FeatureRecord {
                token_id: w.token_id,
                face: lookup(streams.face, mid, dims.face, i, "face")?,
                background: lookup(streams.background, mid, dims.background, i, "background")?,
                audio: lookup(streams.audio, mid, dims.audio, i, "audio")?,
                is_pad: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    AlignedSequence::from_valid(records, n, dims, None)
}

fn lookup(
    stream: &[TimedVector],
    time: f64,
    dim: usize,
    word_index: usize,
    name: &str,
) -> Result<Vec<f64>> {
    let containing = stream.iter().find(|seg| seg.start <= time && time < seg.end);
    let best = match containing {
        Some(seg) => Some((0.0, seg)),
        None => {
            let mut best: Option<(f64, &TimedVector)> = None;
            for seg in stream {
                let dist = if time < seg.start {
                    seg.start - time
                } else {
                    time - seg.end
                };
                // strict comparison keeps the earliest segment on ties
                if best.is_none_or(|(d, _)| dist < d) {
                    best = Some((dist, seg));
                }
            }
            best
        }
    };
    match best {
        Some((dist, seg)) if dist <= MAX_GAP_SECONDS => {
            if seg.values.len() != dim {
                return Err(Error::Alignment {
                    word_index,
                    reason: format!(
                        "{name} vector has dim {}, expected {dim}",
                        seg.values.len()
                    ),
                });
            }
            Ok(seg.values.clone())
        }
        Some((dist, _)) => Err(Error::Alignment {
            word_index,
            reason: format!("nearest {name} interval is {dist:.3}s away"),
        }),
        None => Err(Error::Alignment {
            word_index,
            reason: format!("{name} stream is empty"),
        }),
    }
}
