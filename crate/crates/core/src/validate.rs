//! Consistency checks over a set of runs.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use crate::types::{DocId, QueryId, RankedRun, RankerTag, SourceTag};

#[derive(Debug, Clone, PartialEq)]
pub enum Issue {
    MissingRun {
        query: QueryId,
        source: SourceTag,
        ranker: RankerTag,
    },
    /// Ranks are not exactly 1..n.
    RankGap {
        query: QueryId,
        ranker: RankerTag,
        position: usize,
        rank: u32,
    },
    DuplicateDoc {
        query: QueryId,
        ranker: RankerTag,
        doc: DocId,
    },
    ScoreIncrease {
        query: QueryId,
        ranker: RankerTag,
        rank: u32,
    },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::MissingRun {
                query,
                source,
                ranker,
            } => {
                write!(f, "query {query}: no {source} run from ranker {ranker}")
            }
            Issue::RankGap {
                query,
                ranker,
                position,
                rank,
            } => write!(
                f,
                "query {query}, ranker {ranker}: entry {position} has rank {rank}"
            ),
            Issue::DuplicateDoc { query, ranker, doc } => {
                write!(
                    f,
                    "query {query}, ranker {ranker}: document {doc} listed twice"
                )
            }
            Issue::ScoreIncrease {
                query,
                ranker,
                rank,
            } => write!(
                f,
                "query {query}, ranker {ranker}: score rises at rank {rank}"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn missing_runs(&self) -> impl Iterator<Item = &Issue> {
        self.issues
            .iter()
            .filter(|i| matches!(i, Issue::MissingRun { .. }))
    }

    /// Issues other than missing runs; these make a run unusable.
    pub fn structural(&self) -> impl Iterator<Item = &Issue> {
        self.issues
            .iter()
            .filter(|i| !matches!(i, Issue::MissingRun { .. }))
    }
}

/// Checks every run's internal consistency and, for each source present,
/// that every query seen in that source has a run from each expected ranker.
pub fn validate_runset(
    runs: &[RankedRun],
    expected_rankers: &BTreeSet<RankerTag>,
) -> ValidationReport {
    let mut issues = Vec::new();
    let mut present: BTreeMap<(SourceTag, QueryId), BTreeSet<&RankerTag>> = BTreeMap::new();

    for run in runs {
        present
            .entry((run.source, run.query.clone()))
            .or_default()
            .insert(&run.ranker);

        let mut docs = HashSet::new();
        for (position, entry) in run.entries.iter().enumerate() {
            if entry.rank as usize != position + 1 {
                issues.push(Issue::RankGap {
                    query: run.query.clone(),
                    ranker: run.ranker.clone(),
                    position: position + 1,
                    rank: entry.rank,
                });
            }
            if !docs.insert(&entry.doc) {
                issues.push(Issue::DuplicateDoc {
                    query: run.query.clone(),
                    ranker: run.ranker.clone(),
                    doc: entry.doc.clone(),
                });
            }
        }
        for pair in run.entries.windows(2) {
            if pair[1].score > pair[0].score {
                issues.push(Issue::ScoreIncrease {
                    query: run.query.clone(),
                    ranker: run.ranker.clone(),
                    rank: pair[1].rank,
                });
            }
        }
    }

    for ((source, query), rankers) in &present {
        for expected in expected_rankers {
            if !rankers.contains(expected) {
                issues.push(Issue::MissingRun {
                    query: query.clone(),
                    source: *source,
                    ranker: expected.clone(),
                });
            }
        }
    }

    ValidationReport { issues }
}
