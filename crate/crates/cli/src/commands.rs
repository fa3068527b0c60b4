//! One function per subcommand. Each reads its inputs from the resolved
//! config, writes its outputs atomically under `paths.output` and returns a
//! short human-readable summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use hfrag_core::bm25::{build_index, build_labeled_index, InvertedIndex};
use hfrag_core::context::{source_proportions, PromptRecord, SourceStores, DEFAULT_TEMPLATE};
use hfrag_core::eval::{macro_f1, ndcg_at_k, optsel, sweep_context_size, ConfigId, NdcgReport};
use hfrag_core::fusion::gold_labels;
use hfrag_core::io::jsonl::{read_claims, read_corpus, read_labeled};
use hfrag_core::io::qrels::parse_qrels;
use hfrag_core::io::runfile::{parse_run_file, parse_tag, write_run_file};
use hfrag_core::pipeline::{
    assemble_all, baseline_predictions, read_contexts, run_fusion, write_contexts, FusionOutput,
};
use hfrag_core::predictor::{parse_predictions, write_predictions};
use hfrag_core::{
    grid_search_alpha, validate_runset, Claim, FusionConfig, MergedContext, Mode, Prediction,
    QueryId, RankedRun, RankerTag, RunPool, SourceTag,
};
use serde::Serialize;

use crate::config::{config_error, PipelineConfig, PredictorKind};

/// Writes `contents` to `path` through a temporary file in the same
/// directory, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn snapshot(config: &PipelineConfig, dir: &Path) -> Result<()> {
    write_atomic(&dir.join("resolved-config.toml"), &config.to_toml()?)
}

pub fn index_dir(config: &PipelineConfig) -> PathBuf {
    config.paths.output.join("index")
}

pub fn runs_dir(config: &PipelineConfig, source: SourceTag) -> PathBuf {
    config.paths.output.join("runs").join(source.as_str())
}

pub fn mode_dir(config: &PipelineConfig) -> PathBuf {
    config.paths.output.join(config.mode.as_str())
}

fn load_claims(config: &PipelineConfig) -> Result<Vec<Claim>> {
    let path = config.require("claims", &config.paths.claims)?;
    read_claims(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn load_stores(config: &PipelineConfig) -> Result<SourceStores> {
    let labeled = match &config.paths.labeled {
        Some(p) => read_labeled(&read(p)?).with_context(|| format!("in {}", p.display()))?,
        None => Vec::new(),
    };
    let corpus = match &config.paths.corpus {
        Some(p) => read_corpus(&read(p)?).with_context(|| format!("in {}", p.display()))?,
        None => Vec::new(),
    };
    Ok(SourceStores::new(labeled, corpus)?)
}

fn load_template(config: &PipelineConfig) -> Result<String> {
    match &config.paths.template {
        Some(p) => read(p),
        None => Ok(DEFAULT_TEMPLATE.to_string()),
    }
}

fn queries(claims: &[Claim]) -> Vec<QueryId> {
    claims.iter().map(|c| c.id.clone()).collect()
}

/// Builds the BM25 index of every configured source.
pub fn cmd_index(config: &PipelineConfig) -> Result<String> {
    let dir = index_dir(config);
    let mut summary = String::new();
    if config.paths.corpus.is_none() && config.paths.labeled.is_none() {
        return Err(config_error("index needs paths.corpus or paths.labeled"));
    }
    if let Some(path) = &config.paths.corpus {
        let corpus = read_corpus(&read(path)?).with_context(|| format!("in {}", path.display()))?;
        let index = build_index(&corpus).with_context(|| format!("indexing {}", path.display()))?;
        write_atomic(&dir.join("unlabeled.json"), &index.to_json()?)?;
        let _ = writeln!(summary, "unlabeled: {} passages", index.doc_count());
    }
    if let Some(path) = &config.paths.labeled {
        let store = read_labeled(&read(path)?).with_context(|| format!("in {}", path.display()))?;
        let index =
            build_labeled_index(&store).with_context(|| format!("indexing {}", path.display()))?;
        write_atomic(&dir.join("labeled.json"), &index.to_json()?)?;
        let _ = writeln!(summary, "labeled: {} examples", index.doc_count());
    }
    snapshot(config, &dir)?;
    Ok(summary)
}

/// Retrieves `pool_depth` candidates per claim from each built index.
pub fn cmd_retrieve(config: &PipelineConfig) -> Result<String> {
    let claims = load_claims(config)?;
    let params = config.bm25_params()?;
    let depth = config.fusion.pool_depth;
    let ranker = RankerTag::new("bm25")?;
    let mut summary = String::new();
    let mut any = false;
    for source in SourceTag::ALL {
        let path = index_dir(config).join(format!("{source}.json"));
        if !path.is_file() {
            continue;
        }
        any = true;
        let index = InvertedIndex::from_json(&read(&path)?)
            .with_context(|| format!("in {}", path.display()))?;
        let runs: Vec<RankedRun> = claims
            .iter()
            .map(|c| index.retrieve(&params, &c.id, &c.text, depth, source, &ranker))
            .collect();
        let out = runs_dir(config, source).join("bm25.run");
        write_atomic(&out, &write_run_file(&runs))?;
        let lines: usize = runs.iter().map(RankedRun::len).sum();
        let _ = writeln!(summary, "{}: {lines} lines", out.display());
    }
    if !any {
        bail!(
            "no index under {}; run `hfrag index` first",
            index_dir(config).display()
        );
    }
    snapshot(config, &config.paths.output.join("runs"))?;
    Ok(summary)
}

/// An explicit run file: `PATH` or `source:ranker=PATH`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArg {
    pub tag: Option<(SourceTag, RankerTag)>,
    pub path: PathBuf,
}

impl std::str::FromStr for RunArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once('=') {
            Some((tag, path)) => Ok(RunArg {
                tag: Some(parse_tag(tag).map_err(|e| e.to_string())?),
                path: PathBuf::from(path),
            }),
            None => Ok(RunArg {
                tag: None,
                path: PathBuf::from(s),
            }),
        }
    }
}

fn run_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("cannot list {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "run") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Gathers runs from `explicit` files or, when none are given, from every
/// configured run directory plus the output of `retrieve`.
pub fn collect_runs(config: &PipelineConfig, explicit: &[RunArg]) -> Result<RunPool> {
    let mut pool = RunPool::default();
    let mut add = |runs: Vec<RankedRun>, path: &Path| -> Result<()> {
        for run in runs {
            pool.insert(run)
                .with_context(|| format!("in {}", path.display()))?;
        }
        Ok(())
    };
    if !explicit.is_empty() {
        for arg in explicit {
            let runs = parse_run_file(&read(&arg.path)?, arg.tag.as_ref())
                .with_context(|| format!("in {}", arg.path.display()))?;
            add(runs, &arg.path)?;
        }
        return Ok(pool);
    }
    for source in SourceTag::ALL {
        let mut dirs = config.run_dirs(source).to_vec();
        let generated = runs_dir(config, source);
        if generated.is_dir() && !dirs.contains(&generated) {
            dirs.push(generated);
        }
        for dir in dirs {
            for path in run_files(&dir)? {
                let runs = parse_run_file(&read(&path)?, None)
                    .with_context(|| format!("in {}", path.display()))?;
                if let Some(bad) = runs.iter().find(|r| r.source != source) {
                    bail!(
                        "{} holds {} runs but sits in the {source} run directory",
                        path.display(),
                        bad.tag()
                    );
                }
                add(runs, &path)?;
            }
        }
    }
    Ok(pool)
}

/// Narrows the pool to the configured ranker for single-ranker modes.
fn pool_for_mode(config: &PipelineConfig, mode: Mode, pool: &RunPool) -> Result<RunPool> {
    match (&config.ranker, mode.single_ranker()) {
        (Some(name), true) => {
            let ranker = RankerTag::new(name.as_str())?;
            let mut narrowed = pool.clone();
            for &source in mode.sources() {
                if !pool.rankers(source).contains(&ranker) {
                    return Err(config_error(format!(
                        "no {source}:{ranker} runs for mode {mode}"
                    )));
                }
                narrowed = narrowed.select(source, &ranker);
            }
            Ok(narrowed)
        }
        _ => Ok(pool.clone()),
    }
}

fn fuse(
    config: &PipelineConfig,
    mode: Mode,
    pool: &RunPool,
    queries: &[QueryId],
    fusion: &FusionConfig,
) -> Result<FusionOutput> {
    let pool = pool_for_mode(config, mode, pool)?;
    let output = run_fusion(mode, &pool, queries, fusion, config.alpha).map_err(|e| match e {
        hfrag_core::Error::Mode(m) => config_error(m),
        other => other.into(),
    })?;
    Ok(output)
}

fn report_issues(pool: &RunPool, mode: Mode) {
    for &source in mode.sources() {
        let runs: Vec<RankedRun> = pool
            .runs()
            .filter(|r| r.source == source)
            .cloned()
            .collect();
        let rankers = pool.rankers(source).into_iter().collect();
        for issue in validate_runset(&runs, &rankers).structural() {
            eprintln!("warning: {issue}");
        }
    }
}

/// Fuses the runs of the configured mode; writes per-source fused runs, the
/// merged run and the context JSONL.
pub fn cmd_fuse(config: &PipelineConfig, explicit: &[RunArg]) -> Result<String> {
    let claims = load_claims(config)?;
    let pool = collect_runs(config, explicit)?;
    report_issues(&pool, config.mode);
    // Explicit run files are taken as given; `ranker` only narrows the
    // configured directories.
    let output = if explicit.is_empty() {
        fuse(
            config,
            config.mode,
            &pool,
            &queries(&claims),
            &config.fusion_config()?,
        )?
    } else {
        let unnarrowed = PipelineConfig {
            ranker: None,
            ..config.clone()
        };
        fuse(
            &unnarrowed,
            config.mode,
            &pool,
            &queries(&claims),
            &config.fusion_config()?,
        )?
    };

    let dir = mode_dir(config);
    for (source, lists) in &output.fused {
        let mut text = String::new();
        for list in lists {
            list.write_run_lines(&mut text);
        }
        write_atomic(&dir.join(format!("fused-{source}.run")), &text)?;
    }
    let mut merged = String::new();
    for c in &output.contexts {
        c.write_run_lines(config.mode.run_name(), &mut merged);
    }
    write_atomic(&dir.join("merged.run"), &merged)?;
    write_atomic(
        &dir.join("context.jsonl"),
        &write_contexts(&output.contexts)?,
    )?;
    snapshot(config, &dir)?;

    let (l, u) = source_proportions(&output.contexts);
    Ok(format!(
        "{}: {} contexts, labeled share {l:.3}, unlabeled share {u:.3}\n",
        config.mode,
        output.contexts.len()
    ))
}

fn write_prompts(path: &Path, records: &[PromptRecord]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&r.to_jsonl_line()?);
        text.push('\n');
    }
    write_atomic(path, &text)
}

fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    if !path.is_file() {
        bail!("prediction file {} does not exist", path.display());
    }
    parse_predictions(&read(path)?).with_context(|| format!("in {}", path.display()))
}

/// Writes prompts under `dir` and returns the predictions for them: computed
/// by the baseline, or read from `external` when an outside predictor is
/// configured.
fn predict_into(
    config: &PipelineConfig,
    dir: &Path,
    claims: &[Claim],
    contexts: &[MergedContext],
    stores: &SourceStores,
    template: &str,
    external: &Path,
) -> Result<Vec<Prediction>> {
    let records = assemble_all(claims, contexts, stores, template)?;
    write_prompts(&dir.join("prompts.jsonl"), &records)?;
    match config.predictor {
        PredictorKind::Baseline => {
            let predictions = baseline_predictions(&records);
            write_atomic(
                &dir.join("predictions.jsonl"),
                &write_predictions(&predictions)?,
            )?;
            Ok(predictions)
        }
        PredictorKind::External => read_predictions(external),
    }
}

fn external_predictions(config: &PipelineConfig) -> PathBuf {
    config
        .paths
        .predictions
        .clone()
        .unwrap_or_else(|| mode_dir(config).join("predictions.jsonl"))
}

fn load_contexts(config: &PipelineConfig) -> Result<Vec<MergedContext>> {
    let path = mode_dir(config).join("context.jsonl");
    if !path.is_file() {
        bail!("{} does not exist; run `hfrag fuse` first", path.display());
    }
    read_contexts(&read(&path)?).with_context(|| format!("in {}", path.display()))
}

/// Assembles prompts from the fused contexts. The baseline predictor also
/// writes its predictions.
pub fn cmd_predict(config: &PipelineConfig) -> Result<String> {
    let claims = load_claims(config)?;
    let contexts = load_contexts(config)?;
    let stores = load_stores(config)?;
    let records = assemble_all(&claims, &contexts, &stores, &load_template(config)?)?;
    let dir = mode_dir(config);
    write_prompts(&dir.join("prompts.jsonl"), &records)?;
    let mut summary = format!("{} prompts\n", records.len());
    if config.predictor == PredictorKind::Baseline {
        let predictions = baseline_predictions(&records);
        write_atomic(
            &dir.join("predictions.jsonl"),
            &write_predictions(&predictions)?,
        )?;
        let _ = writeln!(summary, "{} baseline predictions", predictions.len());
    }
    snapshot(config, &dir)?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
struct Proportions {
    labeled: f64,
    unlabeled: f64,
}

#[derive(Debug, Serialize)]
struct FullReport {
    mode: Mode,
    classification: hfrag_core::eval::EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    ndcg: Option<NdcgReport>,
    context_proportions: Proportions,
}

/// Scores predictions against gold labels and, with qrels, the contexts
/// against relevance judgments.
pub fn cmd_eval(config: &PipelineConfig) -> Result<String> {
    let claims = load_claims(config)?;
    let gold = gold_labels(&claims)?;
    let path = match config.predictor {
        PredictorKind::Baseline => mode_dir(config).join("predictions.jsonl"),
        PredictorKind::External => external_predictions(config),
    };
    let predictions = read_predictions(&path)?;
    let classification = macro_f1(&gold, &predictions)?;
    let contexts = load_contexts(config)?;

    let ndcg = match &config.paths.qrels {
        Some(p) => {
            let qrels = parse_qrels(&read(p)?).with_context(|| format!("in {}", p.display()))?;
            let mut rankings: BTreeMap<QueryId, Vec<_>> =
                claims.iter().map(|c| (c.id.clone(), Vec::new())).collect();
            for c in &contexts {
                if let Some(slot) = rankings.get_mut(&c.query) {
                    *slot = c.docs();
                }
            }
            Some(ndcg_at_k(&rankings, &qrels, config.ndcg_k)?)
        }
        None => None,
    };
    let (labeled, unlabeled) = source_proportions(&contexts);

    let mut table = format!("mode: {}\n", config.mode);
    table.push_str(&classification.to_table());
    if let Some(n) = &ndcg {
        match n.mean {
            Some(mean) => {
                let _ = writeln!(
                    table,
                    "nDCG@{}: {mean:.4} over {} claims",
                    n.k,
                    n.per_query.len()
                );
            }
            None => {
                let _ = writeln!(table, "nDCG@{}: no judged claims", n.k);
            }
        }
    }
    let _ = writeln!(
        table,
        "context share: labeled {labeled:.3}, unlabeled {unlabeled:.3}"
    );

    let report = FullReport {
        mode: config.mode,
        classification,
        ndcg,
        context_proportions: Proportions { labeled, unlabeled },
    };
    let dir = mode_dir(config);
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    write_atomic(&dir.join("report.json"), &json)?;
    write_atomic(&dir.join("report.txt"), &table)?;
    snapshot(config, &dir)?;
    Ok(table)
}

/// Macro-F1 of the configured mode at each context size; optionally a grid
/// search over alpha for `lu_rag_alpha`.
pub fn cmd_sweep(config: &PipelineConfig, sizes: &[usize], alpha_grid: &[f64]) -> Result<String> {
    let claims = load_claims(config)?;
    let gold = gold_labels(&claims)?;
    let stores = load_stores(config)?;
    let template = load_template(config)?;
    let pool = collect_runs(config, &[])?;
    let base = config.fusion_config()?;
    let ids = queries(&claims);
    let dir = config.paths.output.join(format!("sweep-{}", config.mode));
    let sizes = if sizes.is_empty() {
        &config.sweep_sizes[..]
    } else {
        sizes
    };

    let table = sweep_context_size(sizes, |size| {
        let fusion = base.with_k(size)?;
        let out = fuse(config, config.mode, &pool, &ids, &fusion).map_err(to_core)?;
        let sub = dir.join(format!("k{size}"));
        let predictions = predict_into(
            config,
            &sub,
            &claims,
            &out.contexts,
            &stores,
            &template,
            &sub.join("predictions.jsonl"),
        )
        .map_err(to_core)?;
        Ok(macro_f1(&gold, &predictions)?.macro_f1)
    })
    .map_err(from_core)?;
    let csv = table.to_csv();
    write_atomic(&dir.join("sweep.csv"), &csv)?;
    let mut summary = csv;

    if !alpha_grid.is_empty() {
        if config.predictor != PredictorKind::Baseline {
            return Err(config_error(
                "the alpha grid search runs with the baseline predictor only",
            ));
        }
        let result = grid_search_alpha(&claims, alpha_grid, |alpha| {
            let cfg = PipelineConfig {
                alpha: Some(alpha),
                ..config.clone()
            };
            let out = fuse(&cfg, Mode::LuRagAlpha, &pool, &ids, &base).map_err(to_core)?;
            let records = assemble_all(&claims, &out.contexts, &stores, &template)?;
            Ok(baseline_predictions(&records))
        })
        .map_err(from_core)?;
        let mut grid = String::from("alpha,macro_f1\n");
        for (alpha, f1) in &result.scores {
            let _ = writeln!(grid, "{alpha},{f1}");
        }
        write_atomic(&dir.join("alpha-grid.csv"), &grid)?;
        let _ = writeln!(
            summary,
            "{grid}best alpha {} (macro-F1 {:.4})",
            result.best_alpha, result.best_macro_f1
        );
    }
    snapshot(config, &dir)?;
    Ok(summary)
}

// The sweep and grid-search drivers take closures returning core results;
// these carry CLI errors through them unchanged.
fn to_core(e: anyhow::Error) -> hfrag_core::Error {
    if let Some(config) = e.downcast_ref::<crate::config::ConfigError>() {
        return hfrag_core::Error::Mode(config.0.clone());
    }
    match e.downcast::<hfrag_core::Error>() {
        Ok(core) => core,
        Err(other) => hfrag_core::Error::Validation(format!("{other:#}")),
    }
}

fn from_core(e: hfrag_core::Error) -> anyhow::Error {
    anyhow!(e)
}

#[derive(Debug, Serialize)]
struct OptSelFile {
    best: String,
    macro_f1: f64,
    scores: BTreeMap<String, f64>,
}

/// Evaluates every single-source, single-ranker configuration and reports
/// the best one by gold macro-F1.
pub fn cmd_optsel(config: &PipelineConfig) -> Result<String> {
    let claims = load_claims(config)?;
    let gold = gold_labels(&claims)?;
    let stores = load_stores(config)?;
    let template = load_template(config)?;
    let pool = collect_runs(config, &[])?;
    let fusion = config.fusion_config()?;
    let ids = queries(&claims);
    let dir = config.paths.output.join("optsel");

    let configs = pool.configs();
    if configs.is_empty() {
        bail!("optsel found no runs");
    }
    let mut per_config = BTreeMap::new();
    for (source, ranker) in configs {
        let mode = match source {
            SourceTag::Labeled => Mode::LRag,
            SourceTag::Unlabeled => Mode::URag,
        };
        let single = pool.select(source, &ranker);
        let out = run_fusion(mode, &single, &ids, &fusion, None)?;
        let sub = dir.join(format!("{source}-{ranker}"));
        write_atomic(&sub.join("context.jsonl"), &write_contexts(&out.contexts)?)?;
        let predictions = predict_into(
            config,
            &sub,
            &claims,
            &out.contexts,
            &stores,
            &template,
            &sub.join("predictions.jsonl"),
        )?;
        per_config.insert(ConfigId { source, ranker }, predictions);
    }
    let result = optsel(&per_config, &gold)?;

    let file = OptSelFile {
        best: result.best.to_string(),
        macro_f1: result.report.macro_f1,
        scores: result
            .scores
            .iter()
            .map(|(c, f)| (c.to_string(), *f))
            .collect(),
    };
    let mut json = serde_json::to_string_pretty(&file)?;
    json.push('\n');
    write_atomic(&dir.join("optsel.json"), &json)?;
    let mut text = String::new();
    for (c, f1) in &file.scores {
        let _ = writeln!(text, "{c:<24} {f1:.4}");
    }
    let _ = writeln!(text, "best: {} ({:.4})", file.best, file.macro_f1);
    write_atomic(&dir.join("optsel.txt"), &text)?;
    snapshot(config, &dir)?;
    Ok(text)
}
