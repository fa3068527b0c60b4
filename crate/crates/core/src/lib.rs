//! Hierarchical rank fusion for retrieval-augmented claim verification.
//!
//! Evidence comes from two sources: a labeled store of training claims with
//! veracity labels and an unlabeled passage corpus. Several rankers retrieve
//! from each source; their runs are fused per source with reciprocal rank
//! fusion ([`fusion::rrf_fuse`]), and the two fused lists are merged on a
//! z-score scale ([`fusion::hierarchical_fuse`]) into a single top-k context.
//!
//! The crate also carries the plumbing around that core: run-file, qrels and
//! JSONL formats ([`io`]), an embedded BM25 retriever ([`bm25`]), prompt
//! assembly ([`context`]), a predictor protocol with a majority-vote baseline
//! ([`predictor`]), and evaluation ([`eval`]).

pub mod bm25;
pub mod context;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod io;
pub mod pipeline;
pub mod predictor;
pub mod types;
pub mod validate;

pub use error::{Error, Result};
pub use fusion::{
    alpha_mix, grid_search_alpha, hierarchical_fuse, rrf_fuse, zscore_standardize, FusedList,
    FusionConfig, MergedContext, MergedEntry,
};
pub use pipeline::{Mode, RunPool};
pub use predictor::Prediction;
pub use types::{
    Claim, DocId, Label, LabeledExample, Passage, Qrels, QueryId, RankedRun, RankerTag, RunEntry,
    SourceTag,
};
pub use validate::{validate_runset, Issue, ValidationReport};
