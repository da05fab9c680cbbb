//! Contaminant removal for binary-feature malware datasets.
//!
//! The crate is organized along the pipeline:
//!
//! - [`feature`]: feature spaces, sparse binary vectors, labeled/unlabeled datasets
//! - [`ingest`]: feature files, manifests, offline URL resolution
//! - [`select`]: occurrence-threshold feature selection
//! - [`classifier`]: logistic, tree and forest learners producing probabilities
//! - [`pu`]: positive-unlabeled adjustment and contaminant removal
//! - [`eval`]: metrics, a synthetic generator with known ground truth,
//!   contamination experiments, PCA and report output
//!
//! The book under `book/` walks through each stage; its code samples are
//! compiled as doc-tests of this crate.

pub mod classifier;
pub mod error;
pub mod eval;
pub mod feature;
pub mod ingest;
pub mod json;
pub mod pu;
pub mod rng;
pub mod select;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/ingest.md")]
    mod ingest {}
    #[doc = include_str!("../../../book/src/selection.md")]
    mod selection {}
    #[doc = include_str!("../../../book/src/classifiers.md")]
    mod classifiers {}
    #[doc = include_str!("../../../book/src/pu.md")]
    mod pu {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
