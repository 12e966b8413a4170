//! Synthetic corpora, text clustering and target splits.

mod generate;
mod kmeans;
mod split;

pub use generate::{all_sequences, generate, trait_maps, Corpus, GeneratorSpec, MapOverride, TraitMap};
pub use kmeans::{
    adjusted_rand_index, kmeans, kmeans_domains, text_features, KMeansResult, MAX_LLOYD_ITERATIONS,
    RESTARTS,
};
pub use split::{make_split, SplitPlan, DEFAULT_RATIO};
