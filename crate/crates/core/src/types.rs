//! Domain types shared by every stage of the pipeline.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

macro_rules! token_type {
    ($(#[$meta:meta])* $name:ident, $what:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(String);

        impl $name {
            /// Builds the token, rejecting empty values and embedded whitespace.
            pub fn new(value: impl Into<String>) -> Result<Self> {
                let value = value.into();
                if value.is_empty() {
                    return Err(Error::invalid($what, "must not be empty"));
                }
                if value.chars().any(char::is_whitespace) {
                    return Err(Error::invalid(
                        $what,
                        format!("{value:?} contains whitespace"),
                    ));
                }
                Ok(Self(value))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                Self::new(s)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(&self.0)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let raw = String::deserialize(deserializer)?;
                Self::new(raw).map_err(serde::de::Error::custom)
            }
        }
    };
}

token_type!(
    /// Identifier of a passage or labeled example.
    DocId,
    "document id"
);
token_type!(
    /// Identifier of a claim (a query in retrieval terms).
    QueryId,
    "query id"
);
token_type!(
    /// Name of a retrieval model, e.g. `bm25`.
    RankerTag,
    "ranker tag"
);

/// Which evidence store a document comes from.
///
/// The derived ordering puts `Labeled` first, which is the cross-source
/// tie-break used when merging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceTag {
    Labeled,
    Unlabeled,
}

impl SourceTag {
    pub const ALL: [SourceTag; 2] = [SourceTag::Labeled, SourceTag::Unlabeled];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceTag::Labeled => "labeled",
            SourceTag::Unlabeled => "unlabeled",
        }
    }
}

impl fmt::Display for SourceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "labeled" => Ok(SourceTag::Labeled),
            "unlabeled" => Ok(SourceTag::Unlabeled),
            other => Err(Error::invalid(
                "source tag",
                format!("{other:?} is neither \"labeled\" nor \"unlabeled\""),
            )),
        }
    }
}

/// Veracity label of a claim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Supports,
    Refutes,
    NotEnoughInfo,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Supports, Label::Refutes, Label::NotEnoughInfo];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Supports => "SUPPORTS",
            Label::Refutes => "REFUTES",
            Label::NotEnoughInfo => "NOT_ENOUGH_INFO",
        }
    }

    pub(crate) fn index(self) -> usize {
        match self {
            Label::Supports => 0,
            Label::Refutes => 1,
            Label::NotEnoughInfo => 2,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    /// Case-insensitive; accepts the spellings used by FEVER-style datasets.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "supports" | "support" => Ok(Label::Supports),
            "refutes" | "refute" => Ok(Label::Refutes),
            "nei" | "not enough info" | "not-enough-information" | "not_enough_info" => {
                Ok(Label::NotEnoughInfo)
            }
            _ => Err(Error::UnknownLabel(s.to_string())),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub doc: DocId,
    pub rank: u32,
    pub score: f64,
}

/// One ranker's ordered result list for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRun {
    pub query: QueryId,
    pub source: SourceTag,
    pub ranker: RankerTag,
    pub entries: Vec<RunEntry>,
}

impl RankedRun {
    pub fn empty(query: QueryId, source: SourceTag, ranker: RankerTag) -> Self {
        RankedRun {
            query,
            source,
            ranker,
            entries: Vec::new(),
        }
    }

    /// Builds a run from documents in rank order, assigning ranks 1..n.
    pub fn from_ordered(
        query: QueryId,
        source: SourceTag,
        ranker: RankerTag,
        docs: impl IntoIterator<Item = (DocId, f64)>,
    ) -> Self {
        let entries = docs
            .into_iter()
            .zip(1u32..)
            .map(|((doc, score), rank)| RunEntry { doc, rank, score })
            .collect();
        RankedRun {
            query,
            source,
            ranker,
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The `source:ranker` tag written in the last run-file column.
    pub fn tag(&self) -> String {
        format!("{}:{}", self.source, self.ranker)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Claim {
    pub id: QueryId,
    pub text: String,
    pub gold_label: Option<Label>,
}

impl Claim {
    pub fn new(id: QueryId, text: impl Into<String>, gold_label: Option<Label>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::invalid("claim", format!("{id}: text is empty")));
        }
        Ok(Claim {
            id,
            text,
            gold_label,
        })
    }
}

/// A record of the labeled store: a training claim with its veracity label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub id: DocId,
    pub claim_text: String,
    pub label: Label,
    pub evidence: Option<String>,
}

impl LabeledExample {
    pub fn new(
        id: DocId,
        claim_text: impl Into<String>,
        label: Label,
        evidence: Option<String>,
    ) -> Result<Self> {
        let claim_text = claim_text.into();
        if claim_text.trim().is_empty() {
            return Err(Error::invalid(
                "labeled example",
                format!("{id}: claim text is empty"),
            ));
        }
        Ok(LabeledExample {
            id,
            claim_text,
            label,
            evidence,
        })
    }
}

/// A record of the unlabeled corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Passage {
    pub id: DocId,
    pub text: String,
    pub title: Option<String>,
}

impl Passage {
    pub fn new(id: DocId, text: impl Into<String>, title: Option<String>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::invalid("passage", format!("{id}: text is empty")));
        }
        Ok(Passage { id, text, title })
    }
}

/// Graded relevance judgments. Pairs that were never judged have grade 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Qrels {
    grades: BTreeMap<QueryId, BTreeMap<DocId, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a judgment. Repeating a pair with the same grade is a no-op;
    /// a conflicting grade is an error.
    pub fn insert(&mut self, query: QueryId, doc: DocId, grade: u32) -> Result<()> {
        let per_query = self.grades.entry(query.clone()).or_default();
        match per_query.get(&doc) {
            Some(&existing) if existing != grade => Err(Error::Validation(format!(
                "conflicting grades {existing} and {grade} for ({query}, {doc})"
            ))),
            _ => {
                per_query.insert(doc, grade);
                Ok(())
            }
        }
    }

    pub fn grade(&self, query: &QueryId, doc: &DocId) -> u32 {
        self.grades
            .get(query)
            .and_then(|docs| docs.get(doc))
            .copied()
            .unwrap_or(0)
    }

    pub fn judged(&self, query: &QueryId) -> Option<&BTreeMap<DocId, u32>> {
        self.grades.get(query)
    }

    pub fn queries(&self) -> impl Iterator<Item = &QueryId> {
        self.grades.keys()
    }

    pub fn len(&self) -> usize {
        self.grades.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
