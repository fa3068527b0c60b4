//! Hierarchical rank fusion.
//!
//! Within a source, runs from several rankers are combined by reciprocal rank
//! fusion: a document scores `Σ 1/rank` over every ranker, where a ranker that
//! did not return the document contributes `1/M`. Across sources, each fused
//! list is standardized to z-scores over its own top-k and the two lists are
//! merged on that common scale.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::macro_f1;
use crate::io::runfile::push_line;
use crate::predictor::Prediction;
use crate::types::{Claim, DocId, Label, QueryId, RankedRun, RankerTag, SourceTag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Context size: entries kept after each fusion step.
    pub k: usize,
    /// Entries taken from each ranker's run.
    pub pool_depth: usize,
    /// Rank assigned to a document a ranker did not return.
    pub missing_rank_m: u32,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            k: 10,
            pool_depth: 50,
            missing_rank_m: 1000,
        }
    }
}

impl FusionConfig {
    pub fn new(k: usize, pool_depth: usize, missing_rank_m: u32) -> Result<Self> {
        let config = FusionConfig {
            k,
            pool_depth,
            missing_rank_m,
        };
        config.validate()?;
        Ok(config)
    }

    /// `M` must dwarf any rank a ranker can actually assign: at least ten
    /// times the pool depth.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("fusion config", "k must be at least 1"));
        }
        if self.pool_depth == 0 {
            return Err(Error::invalid(
                "fusion config",
                "pool_depth must be at least 1",
            ));
        }
        if (self.missing_rank_m as u64) < 10 * self.pool_depth as u64 {
            return Err(Error::invalid(
                "fusion config",
                format!(
                    "missing_rank_m = {} is below 10 x pool_depth = {}",
                    self.missing_rank_m,
                    10 * self.pool_depth
                ),
            ));
        }
        Ok(())
    }

    pub fn with_k(self, k: usize) -> Result<Self> {
        Self::new(k, self.pool_depth, self.missing_rank_m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedEntry {
    pub doc: DocId,
    pub score: f64,
}

/// One source's fused ranking for one query, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedList {
    query: QueryId,
    source: SourceTag,
    entries: Vec<FusedEntry>,
}

impl FusedList {
    /// Wraps an already ordered list. Scores must be finite, positive and
    /// non-increasing, and documents unique.
    pub fn new(query: QueryId, source: SourceTag, entries: Vec<(DocId, f64)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (doc, score) in &entries {
            if !(score.is_finite() && *score > 0.0) {
                return Err(Error::invalid(
                    "fused list",
                    format!("{doc}: score {score} is not positive"),
                ));
            }
            if !seen.insert(doc) {
                return Err(Error::DuplicateDoc(doc.clone()));
            }
        }
        if entries.windows(2).any(|w| w[1].1 > w[0].1) {
            return Err(Error::invalid(
                "fused list",
                "scores must be non-increasing",
            ));
        }
        Ok(FusedList {
            query,
            source,
            entries: entries
                .into_iter()
                .map(|(doc, score)| FusedEntry { doc, score })
                .collect(),
        })
    }

    pub fn empty(query: QueryId, source: SourceTag) -> Self {
        FusedList {
            query,
            source,
            entries: Vec::new(),
        }
    }

    pub fn query(&self) -> &QueryId {
        &self.query
    }

    pub fn source(&self) -> SourceTag {
        self.source
    }

    pub fn entries(&self) -> &[FusedEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends run-file lines tagged `fused:<source>`.
    pub fn write_run_lines(&self, out: &mut String) {
        let tag = format!("fused:{}", self.source);
        for (i, e) in self.entries.iter().enumerate() {
            push_line(out, &self.query, &e.doc, i + 1, e.score, &tag);
        }
    }
}

struct Candidate<'a> {
    doc: &'a DocId,
    /// One rank per ranker, ascending.
    ranks: Vec<u32>,
    score: f64,
}

/// Exact value of `Σ 1/r` as a reduced-enough fraction.
fn reciprocal_sum(ranks: &[u32]) -> (BigUint, BigUint) {
    let mut num = BigUint::from(0u32);
    let mut den = BigUint::from(1u32);
    for &r in ranks {
        // num/den + 1/r = (num*r + den) / (den*r)
        num = num * r + &den;
        den *= r;
    }
    (num, den)
}

/// Orders candidates by exact fused score, descending. Floats decide when
/// they are clearly apart; near ties are settled with exact fractions so that
/// mathematically equal scores really tie.
fn cmp_exact(a: &Candidate<'_>, b: &Candidate<'_>) -> Ordering {
    const FAST_PATH_GAP: f64 = 1e-9;
    if (a.score - b.score).abs() > FAST_PATH_GAP {
        return b.score.total_cmp(&a.score);
    }
    if a.ranks == b.ranks {
        return Ordering::Equal;
    }
    let (an, ad) = reciprocal_sum(&a.ranks);
    let (bn, bd) = reciprocal_sum(&b.ranks);
    (bn * ad).cmp(&(an * bd))
}

/// Fuses the runs of one (query, source) pair.
///
/// Each run is cut to `pool_depth` entries. Runs are processed in ranker
/// order, so the input order never affects the result. Ties on the exact
/// fused score go to the smaller document id.
pub fn rrf_fuse(runs: &[RankedRun], config: &FusionConfig) -> Result<FusedList> {
    config.validate()?;
    let first = runs
        .first()
        .ok_or_else(|| Error::MixedRuns("at least one run is required".into()))?;
    let mut seen_rankers: BTreeSet<&RankerTag> = BTreeSet::new();
    for run in runs {
        if run.query != first.query {
            return Err(Error::MixedRuns(format!(
                "queries {} and {} in one fusion",
                first.query, run.query
            )));
        }
        if run.source != first.source {
            return Err(Error::MixedRuns(format!(
                "sources {} and {} in one fusion",
                first.source, run.source
            )));
        }
        if !seen_rankers.insert(&run.ranker) {
            return Err(Error::MixedRuns(format!(
                "ranker {} supplied twice",
                run.ranker
            )));
        }
    }

    let mut ordered: Vec<&RankedRun> = runs.iter().collect();
    ordered.sort_by(|a, b| a.ranker.cmp(&b.ranker));
    let n_rankers = ordered.len();
    let m = config.missing_rank_m;

    let mut slots: HashMap<&DocId, Vec<u32>> = HashMap::new();
    for (slot, run) in ordered.iter().enumerate() {
        for entry in run.entries.iter().take(config.pool_depth) {
            if entry.rank == 0 {
                return Err(Error::Validation(format!(
                    "query {}: document {} has rank 0",
                    run.query, entry.doc
                )));
            }
            // 0 marks "not returned"; real ranks start at 1.
            let ranks = slots
                .entry(&entry.doc)
                .or_insert_with(|| vec![0; n_rankers]);
            if ranks[slot] != 0 {
                return Err(Error::Validation(format!(
                    "query {}: document {} listed twice by {}",
                    run.query, entry.doc, run.ranker
                )));
            }
            ranks[slot] = entry.rank;
        }
    }

    let mut candidates: Vec<Candidate<'_>> = slots
        .into_iter()
        .map(|(doc, mut ranks)| {
            for r in ranks.iter_mut().filter(|r| **r == 0) {
                *r = m;
            }
            ranks.sort_unstable();
            let score = ranks.iter().map(|&r| 1.0 / r as f64).sum();
            Candidate { doc, ranks, score }
        })
        .collect();
    candidates.sort_by(|a, b| cmp_exact(a, b).then_with(|| a.doc.cmp(b.doc)));
    candidates.truncate(config.k);

    // Rounding can leave a float one ulp above its predecessor even though
    // the exact order says otherwise; clamp so scores never rise.
    let mut entries = Vec::with_capacity(candidates.len());
    let mut ceiling = f64::INFINITY;
    for c in candidates {
        let score = c.score.min(ceiling);
        ceiling = score;
        entries.push(FusedEntry {
            doc: c.doc.clone(),
            score,
        });
    }

    Ok(FusedList {
        query: first.query.clone(),
        source: first.source,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardized {
    pub doc: DocId,
    pub source: SourceTag,
    pub z: f64,
}

/// Mean and population standard deviation, two-pass. Constant input gives
/// σ = 0 exactly.
fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if min == max {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// z-scores of a fused list against its own mean and population std.
/// A list whose scores are all equal maps to all zeros.
pub fn zscore_standardize(fused: &FusedList) -> Result<Vec<Standardized>> {
    if fused.is_empty() {
        return Err(Error::EmptyList);
    }
    let scores: Vec<f64> = fused.entries.iter().map(|e| e.score).collect();
    let (mean, std) = mean_and_std(&scores);
    Ok(fused
        .entries
        .iter()
        .map(|e| Standardized {
            doc: e.doc.clone(),
            source: fused.source,
            z: if std == 0.0 {
                0.0
            } else {
                (e.score - mean) / std
            },
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedEntry {
    pub doc: DocId,
    pub source: SourceTag,
    /// z-score for hierarchical merges; the source-local fused score for
    /// single-source contexts and alpha mixtures.
    pub score: f64,
}

/// The final context for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedContext {
    pub query: QueryId,
    pub entries: Vec<MergedEntry>,
}

impl MergedContext {
    pub fn empty(query: QueryId) -> Self {
        MergedContext {
            query,
            entries: Vec::new(),
        }
    }

    /// A single-source context carrying the fused scores unchanged.
    pub fn from_fused(fused: &FusedList) -> Self {
        MergedContext {
            query: fused.query.clone(),
            entries: fused
                .entries
                .iter()
                .map(|e| MergedEntry {
                    doc: e.doc.clone(),
                    source: fused.source,
                    score: e.score,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, source: SourceTag) -> usize {
        self.entries.iter().filter(|e| e.source == source).count()
    }

    pub fn docs(&self) -> Vec<DocId> {
        self.entries.iter().map(|e| e.doc.clone()).collect()
    }

    /// Appends run-file lines tagged `merged:<name>`.
    pub fn write_run_lines(&self, name: &str, out: &mut String) {
        let tag = format!("merged:{name}");
        for (i, e) in self.entries.iter().enumerate() {
            push_line(out, &self.query, &e.doc, i + 1, e.score, &tag);
        }
    }
}

fn check_pair(labeled: &FusedList, unlabeled: &FusedList) -> Result<()> {
    if labeled.source != SourceTag::Labeled || unlabeled.source != SourceTag::Unlabeled {
        return Err(Error::MixedRuns(format!(
            "expected labeled and unlabeled lists, got {} and {}",
            labeled.source, unlabeled.source
        )));
    }
    if labeled.query != unlabeled.query {
        return Err(Error::MixedRuns(format!(
            "queries {} and {} in one merge",
            labeled.query, unlabeled.query
        )));
    }
    Ok(())
}

/// Merges the two sources on the z-score scale and keeps the top `k`.
///
/// Each side is standardized on its own; raw fused scores are never compared
/// across sources. Equal z-scores put the labeled entry first. Within a
/// source the fused order is kept, so a document never enters the context
/// ahead of a better-fused document from the same source.
pub fn hierarchical_fuse(
    labeled: &FusedList,
    unlabeled: &FusedList,
    config: &FusionConfig,
) -> Result<MergedContext> {
    check_pair(labeled, unlabeled)?;
    let standardize = |list: &FusedList| {
        if list.is_empty() {
            Ok(Vec::new())
        } else {
            zscore_standardize(list)
        }
    };
    let left = standardize(labeled)?;
    let right = standardize(unlabeled)?;

    let mut entries = Vec::with_capacity(config.k.min(left.len() + right.len()));
    let (mut i, mut j) = (0, 0);
    while entries.len() < config.k && (i < left.len() || j < right.len()) {
        let take_left = match (left.get(i), right.get(j)) {
            (Some(l), Some(r)) => l.z >= r.z,
            (Some(_), None) => true,
            _ => false,
        };
        let chosen = if take_left {
            i += 1;
            &left[i - 1]
        } else {
            j += 1;
            &right[j - 1]
        };
        entries.push(MergedEntry {
            doc: chosen.doc.clone(),
            source: chosen.source,
            score: chosen.z,
        });
    }

    Ok(MergedContext {
        query: labeled.query.clone(),
        entries,
    })
}

/// Fixed-proportion mixture: `round(alpha * k)` unlabeled entries followed by
/// the remaining slots from the labeled list.
///
/// Rounding is half away from zero. For `0 < alpha < 1` a side that runs
/// short is backfilled from the other; `alpha = 0` and `alpha = 1` take one
/// source only.
pub fn alpha_mix(
    labeled: &FusedList,
    unlabeled: &FusedList,
    alpha: f64,
    k: usize,
) -> Result<MergedContext> {
    check_pair(labeled, unlabeled)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(
            "alpha",
            format!("{alpha} is outside [0, 1]"),
        ));
    }
    let (n_unlabeled, n_labeled) = if alpha == 0.0 {
        (0, k.min(labeled.len()))
    } else if alpha == 1.0 {
        (k.min(unlabeled.len()), 0)
    } else {
        let want_u = (alpha * k as f64).round() as usize;
        let want_l = k - want_u;
        let take_u = want_u.min(unlabeled.len());
        let take_l = want_l.min(labeled.len());
        // Backfill unused slots from whichever side has entries left.
        let spare = k - take_u - take_l;
        let extra_u = spare.min(unlabeled.len() - take_u);
        let extra_l = (spare - extra_u).min(labeled.len() - take_l);
        (take_u + extra_u, take_l + extra_l)
    };

    let mut ctx = MergedContext::empty(labeled.query.clone());
    for (list, n) in [(unlabeled, n_unlabeled), (labeled, n_labeled)] {
        ctx.entries
            .extend(list.entries[..n].iter().map(|e| MergedEntry {
                doc: e.doc.clone(),
                source: list.source,
                score: e.score,
            }));
    }
    Ok(ctx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub best_alpha: f64,
    pub best_macro_f1: f64,
    /// `(alpha, macro_f1)` in grid order.
    pub scores: Vec<(f64, f64)>,
}

/// Picks the alpha whose end-to-end predictions score the highest macro-F1
/// on `dev_claims`. Ties go to the smaller alpha.
pub fn grid_search_alpha<F>(
    dev_claims: &[Claim],
    grid: &[f64],
    mut pipeline: F,
) -> Result<GridSearchResult>
where
    F: FnMut(f64) -> Result<Vec<Prediction>>,
{
    if dev_claims.is_empty() {
        return Err(Error::Eval(
            "grid search needs at least one dev claim".into(),
        ));
    }
    if grid.is_empty() {
        return Err(Error::Eval("grid search needs at least one alpha".into()));
    }
    if let Some(bad) = grid.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::invalid("alpha", format!("{bad} is outside [0, 1]")));
    }
    let gold = gold_labels(dev_claims)?;

    let mut scores = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, f64)> = None;
    for &alpha in grid {
        let predictions = pipeline(alpha)?;
        let f1 = macro_f1(&gold, &predictions)?.macro_f1;
        scores.push((alpha, f1));
        best = match best {
            Some((a, f)) if f > f1 || (f == f1 && a <= alpha) => Some((a, f)),
            _ => Some((alpha, f1)),
        };
    }
    let (best_alpha, best_macro_f1) = best.expect("grid is non-empty");
    Ok(GridSearchResult {
        best_alpha,
        best_macro_f1,
        scores,
    })
}

/// Gold labels keyed by claim id; every claim must carry one.
pub fn gold_labels(claims: &[Claim]) -> Result<std::collections::BTreeMap<QueryId, Label>> {
    claims
        .iter()
        .map(|c| {
            c.gold_label
                .map(|l| (c.id.clone(), l))
                .ok_or_else(|| Error::Eval(format!("claim {} has no gold label", c.id)))
        })
        .collect()
}
