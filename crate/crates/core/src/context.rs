//! Prompt assembly from a merged context.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::MergedContext;
use crate::types::{Claim, DocId, Label, LabeledExample, Passage, QueryId, SourceTag};

pub const DEFAULT_INSTRUCTION: &str = "Decide whether the evidence supports or refutes the claim. \
Answer with exactly one of: SUPPORTS, REFUTES, NOT_ENOUGH_INFO.";

/// Placeholders: `{instruction}`, `{blocks}`, `{claim}`.
pub const DEFAULT_TEMPLATE: &str = "{instruction}\n\n{blocks}\n\nClaim: {claim}\nAnswer:";

#[derive(Debug, Clone, Default)]
pub struct SourceStores {
    pub labeled: BTreeMap<DocId, LabeledExample>,
    pub unlabeled: BTreeMap<DocId, Passage>,
}

impl SourceStores {
    pub fn new(labeled: Vec<LabeledExample>, unlabeled: Vec<Passage>) -> Result<Self> {
        let mut stores = SourceStores::default();
        for ex in labeled {
            if let Some(prev) = stores.labeled.insert(ex.id.clone(), ex) {
                return Err(Error::DuplicateDoc(prev.id));
            }
        }
        for p in unlabeled {
            if let Some(prev) = stores.unlabeled.insert(p.id.clone(), p) {
                return Err(Error::DuplicateDoc(prev.id));
            }
        }
        Ok(stores)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub source: SourceTag,
    pub doc: DocId,
    /// Veracity label for labeled exemplars.
    pub label: Option<Label>,
    pub rendered_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub query: QueryId,
    pub claim_text: String,
    pub blocks: Vec<Block>,
    pub instruction: String,
    /// The template filled in.
    pub prompt: String,
}

impl PromptRecord {
    pub fn count(&self, source: SourceTag) -> usize {
        self.blocks.iter().filter(|b| b.source == source).count()
    }

    /// One line of the prompt JSONL consumed by predictor adapters.
    pub fn to_jsonl_line(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Line<'a> {
            id: &'a QueryId,
            prompt: &'a str,
            n_labeled: usize,
            n_unlabeled: usize,
        }
        Ok(serde_json::to_string(&Line {
            id: &self.query,
            prompt: &self.prompt,
            n_labeled: self.count(SourceTag::Labeled),
            n_unlabeled: self.count(SourceTag::Unlabeled),
        })?)
    }
}

fn render_labeled(ex: &LabeledExample) -> String {
    let mut text = format!("Claim: {}\nLabel: {}", ex.claim_text, ex.label);
    if let Some(evidence) = &ex.evidence {
        text.push_str("\nEvidence: ");
        text.push_str(evidence);
    }
    text
}

/// Builds the prompt for `claim`, one block per context entry in context
/// order.
pub fn assemble(
    claim: &Claim,
    context: &MergedContext,
    stores: &SourceStores,
    template: &str,
) -> Result<PromptRecord> {
    let unresolved = |doc: &DocId, store| Error::UnresolvedDoc {
        query: context.query.clone(),
        doc: doc.clone(),
        store,
    };
    let blocks = context
        .entries
        .iter()
        .map(|entry| match entry.source {
            SourceTag::Labeled => {
                let ex = stores
                    .labeled
                    .get(&entry.doc)
                    .ok_or_else(|| unresolved(&entry.doc, entry.source))?;
                Ok(Block {
                    source: entry.source,
                    doc: entry.doc.clone(),
                    label: Some(ex.label),
                    rendered_text: render_labeled(ex),
                })
            }
            SourceTag::Unlabeled => {
                let p = stores
                    .unlabeled
                    .get(&entry.doc)
                    .ok_or_else(|| unresolved(&entry.doc, entry.source))?;
                Ok(Block {
                    source: entry.source,
                    doc: entry.doc.clone(),
                    label: None,
                    rendered_text: format!("Evidence: {}", p.text),
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let joined = blocks
        .iter()
        .map(|b| b.rendered_text.as_str())
        .collect::<Vec<_>>()
        .join("\n\n");
    // Single pass so placeholder-like text inside claims or blocks is left alone.
    let prompt = fill_template(
        template,
        &[
            ("{instruction}", DEFAULT_INSTRUCTION),
            ("{blocks}", &joined),
            ("{claim}", &claim.text),
        ],
    );

    Ok(PromptRecord {
        query: claim.id.clone(),
        claim_text: claim.text.clone(),
        blocks,
        instruction: DEFAULT_INSTRUCTION.to_string(),
        prompt,
    })
}

fn fill_template(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'outer: while !rest.is_empty() {
        for (key, value) in values {
            if let Some(tail) = rest.strip_prefix(key) {
                out.push_str(value);
                rest = tail;
                continue 'outer;
            }
        }
        let ch = rest.chars().next().expect("non-empty");
        out.push(ch);
        rest = &rest[ch.len_utf8()..];
    }
    out
}

/// Share of context entries from each source across all contexts, as
/// `(labeled, unlabeled)`. Both are 0 when there are no entries.
pub fn source_proportions(contexts: &[MergedContext]) -> (f64, f64) {
    let labeled: usize = contexts.iter().map(|c| c.count(SourceTag::Labeled)).sum();
    let unlabeled: usize = contexts.iter().map(|c| c.count(SourceTag::Unlabeled)).sum();
    let total = labeled + unlabeled;
    if total == 0 {
        return (0.0, 0.0);
    }
    (
        labeled as f64 / total as f64,
        unlabeled as f64 / total as f64,
    )
}
