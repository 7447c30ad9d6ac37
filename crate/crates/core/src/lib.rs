//! Byte n-gram malware classification with interpretation tooling.
//!
//! The pipeline runs hex dumps through n-gram counting and frequency
//! filtering, Chi²/mutual-information selection, and one of three
//! classifiers (one-vs-rest logistic regression, random forest, or a
//! bias-free tanh/sigmoid MLP). The interpretation side explains those
//! models: weight and odds-ratio reports, Gini importances and decision-path
//! contributions, layer-wise relevance propagation, feature ablation, and
//! mapping n-grams back to disassembly.

pub mod codemap;
pub mod corpus;
pub mod error;
pub mod feature_select;
pub mod interpret;
pub mod models;
pub mod ngram_index;
pub mod pipeline;
pub mod robustness;
pub mod synth;

pub use error::{Error, Result};
