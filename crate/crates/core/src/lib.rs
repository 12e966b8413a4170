//! Multimodal Big Five trait regression with gradient-similarity weighted
//! multi-source few-shot adaptation.
//!
//! The guide in `book/` walks through the pieces; its code blocks are run as
//! doc-tests of this crate.

pub mod adapt;
pub mod alignment;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod model;
pub mod seed;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{FlatGradient, Gradients, ParameterSet, Tape, Tensor, Var};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tape.md")]
    mod tape {}
    #[doc = include_str!("../../../book/src/alignment.md")]
    mod alignment {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/adaptation.md")]
    mod adaptation {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
