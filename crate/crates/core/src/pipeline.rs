//! Method configurations composed from the fusion primitives.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::context::{assemble, PromptRecord, SourceStores};
use crate::error::{Error, Result};
use crate::fusion::{
    alpha_mix, hierarchical_fuse, rrf_fuse, FusedList, FusionConfig, MergedContext,
};
use crate::io::jsonl::read_records;
use crate::predictor::{baseline_predict, Prediction};
use crate::types::{Claim, QueryId, RankedRun, RankerTag, SourceTag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// No retrieved context.
    ZeroShot,
    /// One ranker over the labeled store.
    LRag,
    /// One ranker over the unlabeled corpus.
    URag,
    LRagRrf,
    URagRrf,
    /// Fixed-proportion mixture of the two fused lists.
    LuRagAlpha,
    /// Fusion within each source, z-score merge across them.
    HfRag,
}

impl Mode {
    pub const ALL: [Mode; 7] = [
        Mode::ZeroShot,
        Mode::LRag,
        Mode::URag,
        Mode::LRagRrf,
        Mode::URagRrf,
        Mode::LuRagAlpha,
        Mode::HfRag,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::ZeroShot => "zero_shot",
            Mode::LRag => "l_rag",
            Mode::URag => "u_rag",
            Mode::LRagRrf => "l_rag_rrf",
            Mode::URagRrf => "u_rag_rrf",
            Mode::LuRagAlpha => "lu_rag_alpha",
            Mode::HfRag => "hf_rag",
        }
    }

    /// Name used in the `merged:<name>` run tag.
    pub fn run_name(self) -> &'static str {
        match self {
            Mode::ZeroShot => "zeroshot",
            Mode::LRag => "lrag",
            Mode::URag => "urag",
            Mode::LRagRrf => "lrag-rrf",
            Mode::URagRrf => "urag-rrf",
            Mode::LuRagAlpha => "lurag-alpha",
            Mode::HfRag => "hfrag",
        }
    }

    pub fn sources(self) -> &'static [SourceTag] {
        match self {
            Mode::ZeroShot => &[],
            Mode::LRag | Mode::LRagRrf => &[SourceTag::Labeled],
            Mode::URag | Mode::URagRrf => &[SourceTag::Unlabeled],
            Mode::LuRagAlpha | Mode::HfRag => &[SourceTag::Labeled, SourceTag::Unlabeled],
        }
    }

    pub fn single_ranker(self) -> bool {
        matches!(self, Mode::LRag | Mode::URag)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Mode(format!("unknown mode {s:?}")))
    }
}

/// Runs indexed by (source, ranker, query).
#[derive(Debug, Clone, Default)]
pub struct RunPool {
    runs: BTreeMap<(SourceTag, RankerTag), BTreeMap<QueryId, RankedRun>>,
}

impl RunPool {
    pub fn new(runs: impl IntoIterator<Item = RankedRun>) -> Result<Self> {
        let mut pool = RunPool::default();
        for run in runs {
            pool.insert(run)?;
        }
        Ok(pool)
    }

    pub fn insert(&mut self, run: RankedRun) -> Result<()> {
        let per_query = self
            .runs
            .entry((run.source, run.ranker.clone()))
            .or_default();
        if per_query.contains_key(&run.query) {
            return Err(Error::Validation(format!(
                "two {} runs for query {}",
                run.tag(),
                run.query
            )));
        }
        per_query.insert(run.query.clone(), run);
        Ok(())
    }

    pub fn rankers(&self, source: SourceTag) -> Vec<RankerTag> {
        self.runs
            .keys()
            .filter(|(s, _)| *s == source)
            .map(|(_, r)| r.clone())
            .collect()
    }

    pub fn configs(&self) -> Vec<(SourceTag, RankerTag)> {
        self.runs.keys().cloned().collect()
    }

    /// Keeps only `ranker`'s runs for `source`; other sources are untouched.
    pub fn select(&self, source: SourceTag, ranker: &RankerTag) -> RunPool {
        RunPool {
            runs: self
                .runs
                .iter()
                .filter(|((s, r), _)| *s != source || r == ranker)
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn runs(&self) -> impl Iterator<Item = &RankedRun> {
        self.runs.values().flat_map(BTreeMap::values)
    }

    /// One run per ranker of `source` for `query`; a ranker with no run for
    /// the query contributes an empty one.
    pub fn runs_for(&self, source: SourceTag, query: &QueryId) -> Vec<RankedRun> {
        self.runs
            .iter()
            .filter(|((s, _), _)| *s == source)
            .map(|((s, r), per_query)| {
                per_query
                    .get(query)
                    .cloned()
                    .unwrap_or_else(|| RankedRun::empty(query.clone(), *s, r.clone()))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct FusionOutput {
    pub contexts: Vec<MergedContext>,
    /// Per-source fused lists, in query order.
    pub fused: BTreeMap<SourceTag, Vec<FusedList>>,
}

/// Checks that `pool` carries what `mode` needs.
pub fn check_mode(mode: Mode, pool: &RunPool, alpha: Option<f64>) -> Result<()> {
    for &source in mode.sources() {
        let rankers = pool.rankers(source);
        if rankers.is_empty() {
            return Err(Error::Mode(format!(
                "mode {mode} needs {source} runs, none supplied"
            )));
        }
        if mode.single_ranker() && rankers.len() != 1 {
            let names: Vec<_> = rankers.iter().map(RankerTag::as_str).collect();
            return Err(Error::Mode(format!(
                "mode {mode} expects exactly one {source} ranker, got {} ({})",
                rankers.len(),
                names.join(", ")
            )));
        }
    }
    if mode == Mode::LuRagAlpha {
        match alpha {
            Some(a) if (0.0..=1.0).contains(&a) => {}
            Some(a) => return Err(Error::Mode(format!("alpha {a} is outside [0, 1]"))),
            None => return Err(Error::Mode("mode lu_rag_alpha requires alpha".into())),
        }
    }
    Ok(())
}

/// Builds the context of every query under `mode`.
pub fn run_fusion(
    mode: Mode,
    pool: &RunPool,
    queries: &[QueryId],
    config: &FusionConfig,
    alpha: Option<f64>,
) -> Result<FusionOutput> {
    config.validate()?;
    check_mode(mode, pool, alpha)?;
    let mut out = FusionOutput::default();

    for query in queries {
        let mut fused: BTreeMap<SourceTag, FusedList> = BTreeMap::new();
        for &source in mode.sources() {
            fused.insert(source, rrf_fuse(&pool.runs_for(source, query), config)?);
        }
        let context = match mode {
            Mode::ZeroShot => MergedContext::empty(query.clone()),
            Mode::LRag | Mode::LRagRrf => MergedContext::from_fused(&fused[&SourceTag::Labeled]),
            Mode::URag | Mode::URagRrf => MergedContext::from_fused(&fused[&SourceTag::Unlabeled]),
            Mode::HfRag => hierarchical_fuse(
                &fused[&SourceTag::Labeled],
                &fused[&SourceTag::Unlabeled],
                config,
            )?,
            Mode::LuRagAlpha => alpha_mix(
                &fused[&SourceTag::Labeled],
                &fused[&SourceTag::Unlabeled],
                alpha.expect("checked by check_mode"),
                config.k,
            )?,
        };
        out.contexts.push(context);
        for (source, list) in fused {
            out.fused.entry(source).or_default().push(list);
        }
    }
    Ok(out)
}

/// Assembles every prompt; claims follow the order of `claims`.
pub fn assemble_all(
    claims: &[Claim],
    contexts: &[MergedContext],
    stores: &SourceStores,
    template: &str,
) -> Result<Vec<PromptRecord>> {
    let by_query: BTreeMap<&QueryId, &MergedContext> =
        contexts.iter().map(|c| (&c.query, c)).collect();
    claims
        .iter()
        .map(|claim| {
            let empty = MergedContext::empty(claim.id.clone());
            let context = by_query.get(&claim.id).copied().unwrap_or(&empty);
            assemble(claim, context, stores, template)
        })
        .collect()
}

pub fn baseline_predictions(records: &[PromptRecord]) -> Vec<Prediction> {
    records.iter().map(baseline_predict).collect()
}

/// Writes contexts as JSONL: `{"query", "entries": [{"doc", "source", "score"}]}`.
pub fn write_contexts(contexts: &[MergedContext]) -> Result<String> {
    let mut out = String::new();
    for c in contexts {
        out.push_str(&serde_json::to_string(c)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_contexts(text: &str) -> Result<Vec<MergedContext>> {
    let contexts: Vec<MergedContext> = read_records(text)?.into_iter().map(|(_, c)| c).collect();
    let mut seen = BTreeSet::new();
    for c in &contexts {
        if !seen.insert(&c.query) {
            return Err(Error::Validation(format!(
                "two contexts for query {}",
                c.query
            )));
        }
    }
    Ok(contexts)
}
