use thiserror::Error;

use crate::types::{DocId, QueryId, SourceTag};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A line of a text input could not be parsed.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid {what}: {message}")]
    InvalidValue { what: &'static str, message: String },

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("duplicate document id {0}")]
    DuplicateDoc(DocId),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("empty corpus: an index needs at least one document with tokens")]
    EmptyCorpus,

    /// Runs passed to a fusion step disagree on query or source.
    #[error("mixed runs: {0}")]
    MixedRuns(String),

    #[error("cannot standardize an empty list")]
    EmptyList,

    #[error("query {query}: document {doc} not found in the {store} store")]
    UnresolvedDoc {
        query: QueryId,
        doc: DocId,
        store: SourceTag,
    },

    #[error("prediction for unknown query {0}")]
    UnknownQuery(QueryId),

    #[error("duplicate prediction for query {0}")]
    DuplicatePrediction(QueryId),

    #[error("{0}")]
    Mode(String),

    #[error("{0}")]
    Eval(String),

    #[error("context size {size}: {source}")]
    Sweep {
        size: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(what: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidValue {
            what,
            message: message.into(),
        }
    }
}
