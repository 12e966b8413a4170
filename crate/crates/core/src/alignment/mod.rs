//! Word-anchored alignment of the face, background, audio and text streams,
//! and the dataset file format built on it.

mod align;
mod io;
mod types;

pub use align::{align, ModalityStreams, MAX_GAP_SECONDS};
pub use io::{dataset_to_string, load_dataset, write_dataset, Dataset, DatasetEntry, DatasetHeader};
pub use types::{
    AlignedSequence, FeatureDims, FeatureRecord, PersonalityVector, TimedVector, TimedWord,
    DEFAULT_SEQ_LEN, TRAIT_NAMES, UNK_TOKEN,
};
