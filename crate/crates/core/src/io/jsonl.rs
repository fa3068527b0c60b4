//! JSONL readers for the corpus, the labeled store and the claim set.

use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::types::{Claim, DocId, Label, LabeledExample, Passage, QueryId};

/// Deserializes one object per non-blank line, tagging errors with the line.
pub fn read_records<T: DeserializeOwned>(text: &str) -> Result<Vec<(usize, T)>> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(idx, line)| {
            serde_json::from_str(line)
                .map(|record| (idx + 1, record))
                .map_err(|e| Error::parse(idx + 1, e.to_string()))
        })
        .collect()
}

#[derive(Deserialize)]
struct PassageRecord {
    id: DocId,
    text: String,
    #[serde(default)]
    title: Option<String>,
}

#[derive(Deserialize)]
struct LabeledRecord {
    id: DocId,
    claim: String,
    label: String,
    #[serde(default)]
    evidence: Option<String>,
}

#[derive(Deserialize)]
struct ClaimRecord {
    id: QueryId,
    text: String,
    #[serde(default)]
    label: Option<String>,
}

fn parse_label(line: usize, raw: &str) -> Result<Label> {
    raw.parse()
        .map_err(|e: Error| Error::parse(line, e.to_string()))
}

pub fn read_corpus(text: &str) -> Result<Vec<Passage>> {
    read_records::<PassageRecord>(text)?
        .into_iter()
        .map(|(line, r)| {
            Passage::new(r.id, r.text, r.title).map_err(|e| Error::parse(line, e.to_string()))
        })
        .collect()
}

pub fn read_labeled(text: &str) -> Result<Vec<LabeledExample>> {
    read_records::<LabeledRecord>(text)?
        .into_iter()
        .map(|(line, r)| {
            let label = parse_label(line, &r.label)?;
            let evidence = r.evidence.filter(|e| !e.trim().is_empty());
            LabeledExample::new(r.id, r.claim, label, evidence)
                .map_err(|e| Error::parse(line, e.to_string()))
        })
        .collect()
}

pub fn read_claims(text: &str) -> Result<Vec<Claim>> {
    read_records::<ClaimRecord>(text)?
        .into_iter()
        .map(|(line, r)| {
            let gold = r
                .label
                .as_deref()
                .map(|l| parse_label(line, l))
                .transpose()?;
            Claim::new(r.id, r.text, gold).map_err(|e| Error::parse(line, e.to_string()))
        })
        .collect()
}
