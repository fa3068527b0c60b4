//! The generation boundary.
//!
//! External predictors read prompt JSONL and answer with prediction JSONL
//! (`{"id", "label", "raw"?}`) matched by id. [`baseline_predict`] stands in
//! for a model when none is wired up.

use serde::{Deserialize, Serialize};

use crate::context::PromptRecord;
use crate::error::Result;
use crate::io::jsonl::read_records;
use crate::types::{Label, QueryId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    #[serde(rename = "id")]
    pub query: QueryId,
    pub label: Label,
    #[serde(rename = "raw", default, skip_serializing_if = "Option::is_none")]
    pub raw_output: Option<String>,
}

impl Prediction {
    pub fn new(query: QueryId, label: Label) -> Self {
        Prediction {
            query,
            label,
            raw_output: None,
        }
    }
}

/// Majority vote over the labels of the labeled blocks. A tie for the top
/// count, or no labeled block at all, yields `NOT_ENOUGH_INFO`.
pub fn baseline_predict(record: &PromptRecord) -> Prediction {
    let mut counts = [0usize; 3];
    for label in record.blocks.iter().filter_map(|b| b.label) {
        counts[label.index()] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(0);
    let winners: Vec<Label> = Label::ALL
        .into_iter()
        .filter(|l| counts[l.index()] == top)
        .collect();
    let label = match winners.as_slice() {
        [only] if top > 0 => *only,
        _ => Label::NotEnoughInfo,
    };
    Prediction::new(record.query.clone(), label)
}

pub fn parse_predictions(text: &str) -> Result<Vec<Prediction>> {
    Ok(read_records::<Prediction>(text)?
        .into_iter()
        .map(|(_, p)| p)
        .collect())
}

pub fn write_predictions(predictions: &[Prediction]) -> Result<String> {
    let mut out = String::new();
    for p in predictions {
        out.push_str(&serde_json::to_string(p)?);
        out.push('\n');
    }
    Ok(out)
}
