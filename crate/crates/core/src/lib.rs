//! Static pruning toolkit for learned-sparse impact indexes.
//!
//! The pipeline is `ingest -> forward pruning -> invert -> list pruning ->
//! quantize -> save`, followed by top-k search and evaluation. All pruning
//! happens on raw float weights; search is integer-only over the quantized
//! index.

pub mod bench;
pub mod error;
pub mod eval;
pub mod index;
pub mod ingest;
pub mod prune;
pub mod search;
pub mod sparsity;
pub mod types;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use index::{build_index, load_index, quantize_index, save_index, IndexStats, InvertedIndex};
pub use ingest::{Qrels, Run, VocabMap};
pub use prune::PruneConfig;
pub use search::{batch_search, search_daat, search_maxscore, Algorithm, Ranking};
pub use types::{
    quantize_impact, scale_query, score_doc, ForwardIndex, ImpactVector, QuantConfig, Score,
    TermId, WeightedQuery,
};
