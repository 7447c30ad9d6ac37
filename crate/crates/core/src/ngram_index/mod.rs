//! Byte n-gram enumeration, corpus-scale document-frequency counting and
//! binary vectorization.

mod count;
mod flat;
mod gram;
mod matrix;
mod vocab;

pub use count::{
    count_document_frequency, count_parallel, count_with_options, filter_by_frequency, CountOptions, DocFreqCounter,
    DocFreqTable,
};
pub(crate) use count::{header_value, parse_header};
pub use gram::{extract_ngrams, NGram};
pub use matrix::BinaryFeatureMatrix;
pub use vocab::{vectorize, vectorize_all, FeatureVocabulary};
