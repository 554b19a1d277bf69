//! Handwritten character recognition pipeline.
//!
//! The crate ingests the classic OCR letters corpus (8x16 binary glyphs
//! grouped into words), extracts per-glyph feature vectors, trains four
//! probability-emitting base classifiers, and corrects their per-letter
//! decisions at word level with Viterbi decoding over bigram letter models.
//!
//! Modules follow the pipeline stages:
//! - [`dataset`]: file parsing, word assembly, fold-preserving splits
//! - [`imageops`]: binary bitmap statistics (moments, topology, rotation)
//! - [`features`]: the eight feature-set compositions `a`..`h`
//! - [`classifiers`]: kNN, Parzen window, naive Bayes, one-vs-all networks
//! - [`hmm`]: letter-transition models and the three Viterbi decode variants
//! - [`eval`]: accuracy grid, report rendering, timing

pub mod classifiers;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod hmm;
pub mod imageops;
pub mod letter;
pub mod synth;

pub use classifiers::{
    classify_argmax, normalize_emissions, EmissionMatrix, KnnModel, NaiveBayesModel,
    OaaNetworkModel, ParzenModel,
};
pub use dataset::{Dataset, Glyph, SplitAssignment, WordSequence};
pub use error::{Error, Result};
pub use eval::{CellResult, ClassifierTag, EvalReport};
pub use features::{FeatureMatrix, FeatureSetId};
pub use hmm::{DecodedWord, HmmModel};
pub use imageops::{Bitmap, EllipseStats, RegionStats};
pub use letter::Letter;
