//! Classification and retrieval metrics, the single-config oracle bound and
//! context-size sweeps.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictor::Prediction;
use crate::types::{DocId, Label, Qrels, QueryId, RankerTag, SourceTag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: BTreeMap<Label, ClassMetrics>,
    pub macro_f1: f64,
    pub n_claims: usize,
    pub n_missing_predictions: usize,
    /// Claims without a prediction; they were scored as `NOT_ENOUGH_INFO`.
    pub missing: Vec<QueryId>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Macro-F1 over the three labels.
///
/// Missing predictions count as `NOT_ENOUGH_INFO`. 0/0 is taken as 0, and a
/// class absent from gold still contributes its (zero) F1 to the mean.
pub fn macro_f1(gold: &BTreeMap<QueryId, Label>, predictions: &[Prediction]) -> Result<EvalReport> {
    if gold.is_empty() {
        return Err(Error::Eval("no gold labels to evaluate against".into()));
    }
    let mut predicted: BTreeMap<&QueryId, Label> = BTreeMap::new();
    for p in predictions {
        if !gold.contains_key(&p.query) {
            return Err(Error::UnknownQuery(p.query.clone()));
        }
        if predicted.insert(&p.query, p.label).is_some() {
            return Err(Error::DuplicatePrediction(p.query.clone()));
        }
    }

    // confusion[gold][pred]
    let mut confusion = [[0usize; 3]; 3];
    let mut missing = Vec::new();
    for (query, &truth) in gold {
        let guess = predicted.get(query).copied().unwrap_or_else(|| {
            missing.push(query.clone());
            Label::NotEnoughInfo
        });
        confusion[truth.index()][guess.index()] += 1;
    }

    let per_class: BTreeMap<Label, ClassMetrics> = Label::ALL
        .into_iter()
        .map(|label| {
            let i = label.index();
            let tp = confusion[i][i];
            let predicted_as: usize = (0..3).map(|g| confusion[g][i]).sum();
            let support: usize = confusion[i].iter().sum();
            let precision = ratio(tp, predicted_as);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            (
                label,
                ClassMetrics {
                    precision,
                    recall,
                    f1,
                    support,
                },
            )
        })
        .collect();
    let macro_f1 = per_class.values().map(|m| m.f1).sum::<f64>() / 3.0;

    Ok(EvalReport {
        per_class,
        macro_f1,
        n_claims: gold.len(),
        n_missing_predictions: missing.len(),
        missing,
    })
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:>9} {:>9} {:>9} {:>8}",
            "label", "precision", "recall", "f1", "support"
        );
        for (label, m) in &self.per_class {
            let _ = writeln!(
                out,
                "{:<16} {:>9.4} {:>9.4} {:>9.4} {:>8}",
                label.as_str(),
                m.precision,
                m.recall,
                m.f1,
                m.support
            );
        }
        let _ = writeln!(
            out,
            "{:<16} {:>29.4} {:>8}",
            "macro-F1", self.macro_f1, self.n_claims
        );
        if self.n_missing_predictions > 0 {
            let _ = writeln!(
                out,
                "warning: {} claim(s) had no prediction and were scored as NOT_ENOUGH_INFO",
                self.n_missing_predictions
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NdcgReport {
    pub k: usize,
    pub per_query: BTreeMap<QueryId, f64>,
    /// Mean over `per_query`; `None` when no query could be scored.
    pub mean: Option<f64>,
    /// Queries without any relevant judgment.
    pub skipped: Vec<QueryId>,
}

fn dcg(grades: impl IntoIterator<Item = u32>) -> f64 {
    grades
        .into_iter()
        .enumerate()
        .map(|(i, g)| (2f64.powi(g as i32) - 1.0) / ((i + 2) as f64).log2())
        .fold(0.0, |acc, x| acc + x)
}

/// nDCG@k with exponential gain and a `log2(i + 1)` discount.
pub fn ndcg_at_k(
    rankings: &BTreeMap<QueryId, Vec<DocId>>,
    qrels: &Qrels,
    k: usize,
) -> Result<NdcgReport> {
    if k == 0 {
        return Err(Error::invalid("ndcg cutoff", "k must be at least 1"));
    }
    let mut per_query = BTreeMap::new();
    let mut skipped = Vec::new();
    for (query, docs) in rankings {
        let mut ideal: Vec<u32> = qrels
            .judged(query)
            .map(|judged| judged.values().copied().filter(|&g| g > 0).collect())
            .unwrap_or_default();
        if ideal.is_empty() {
            skipped.push(query.clone());
            continue;
        }
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let ideal_dcg = dcg(ideal.into_iter().take(k));
        let mut seen = BTreeSet::new();
        let actual = dcg(docs
            .iter()
            .filter(|d| seen.insert(*d))
            .take(k)
            .map(|d| qrels.grade(query, d)));
        per_query.insert(query.clone(), actual / ideal_dcg);
    }
    let mean =
        (!per_query.is_empty()).then(|| per_query.values().sum::<f64>() / per_query.len() as f64);
    Ok(NdcgReport {
        k,
        per_query,
        mean,
        skipped,
    })
}

/// A single-ranker, single-source configuration.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConfigId {
    pub source: SourceTag,
    pub ranker: RankerTag,
}

impl std::fmt::Display for ConfigId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.source, self.ranker)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptSelResult {
    pub best: ConfigId,
    pub report: EvalReport,
    /// Macro-F1 of every configuration.
    pub scores: BTreeMap<ConfigId, f64>,
}

/// Picks the configuration with the highest macro-F1 against gold labels;
/// an upper bound for any single configuration, not a deployable method.
/// Ties go to the smallest `(source, ranker)`.
pub fn optsel(
    per_config: &BTreeMap<ConfigId, Vec<Prediction>>,
    gold: &BTreeMap<QueryId, Label>,
) -> Result<OptSelResult> {
    let mut reference: Option<(&ConfigId, BTreeSet<&QueryId>)> = None;
    for (config, predictions) in per_config {
        let covered: BTreeSet<&QueryId> = predictions.iter().map(|p| &p.query).collect();
        match &reference {
            None => reference = Some((config, covered)),
            Some((first, claims)) if *claims != covered => {
                return Err(Error::Eval(format!(
                    "configurations {first} and {config} cover different claims"
                )))
            }
            Some(_) => {}
        }
    }

    let mut best: Option<(ConfigId, EvalReport)> = None;
    let mut scores = BTreeMap::new();
    // BTreeMap iteration is already in (source, ranker) order, so a strict
    // comparison keeps the smallest id on ties.
    for (config, predictions) in per_config {
        let report = macro_f1(gold, predictions)?;
        scores.insert(config.clone(), report.macro_f1);
        if best
            .as_ref()
            .is_none_or(|(_, b)| report.macro_f1 > b.macro_f1)
        {
            best = Some((config.clone(), report));
        }
    }
    let (best, report) = best.ok_or_else(|| Error::Eval("no configurations supplied".into()))?;
    Ok(OptSelResult {
        best,
        report,
        scores,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<(usize, f64)>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("size,macro_f1\n");
        for (size, f1) in &self.rows {
            let _ = writeln!(out, "{size},{f1}");
        }
        out
    }
}

/// Runs `pipeline` once per context size, in the order given.
pub fn sweep_context_size<F>(sizes: &[usize], mut pipeline: F) -> Result<SweepTable>
where
    F: FnMut(usize) -> Result<f64>,
{
    if sizes.is_empty() {
        return Err(Error::Eval("sweep needs at least one context size".into()));
    }
    let rows = sizes
        .iter()
        .map(|&size| {
            pipeline(size)
                .map(|f1| (size, f1))
                .map_err(|e| Error::Sweep {
                    size,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;
    Ok(SweepTable { rows })
}
