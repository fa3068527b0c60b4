use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hfrag_core::context::{SourceStores, DEFAULT_TEMPLATE};
use hfrag_core::eval::{macro_f1, optsel, ConfigId};
use hfrag_core::fusion::gold_labels;
use hfrag_core::io::jsonl::{read_claims, read_corpus, read_labeled};
use hfrag_core::io::runfile::parse_run_file;
use hfrag_core::pipeline::{assemble_all, baseline_predictions, run_fusion};
use hfrag_core::{hierarchical_fuse, rrf_fuse, FusionConfig, Mode, RankedRun, RunPool, SourceTag};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn hfrag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hfrag"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = hfrag(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

struct Toy {
    _dir: tempfile::TempDir,
    out: PathBuf,
    config: PathBuf,
}

impl Toy {
    /// Toy fixture with indexes built and BM25 runs retrieved.
    fn prepared() -> Toy {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let config = fixture("toy/config.toml");
        let toy = Toy {
            _dir: dir,
            out,
            config,
        };
        toy.run(&["index"]);
        toy.run(&["retrieve"]);
        toy
    }

    fn args<'a>(&'a self, cmd: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
        let mut args = vec![
            cmd,
            "-c",
            self.config.to_str().unwrap(),
            "-o",
            self.out.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        args
    }

    fn run(&self, cmd_and_extra: &[&str]) -> String {
        ok(&self.args(cmd_and_extra[0], &cmd_and_extra[1..]))
    }

    fn read(&self, rel: &str) -> String {
        std::fs::read_to_string(self.out.join(rel)).unwrap()
    }
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn missing_corpus_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[paths]\ncorpus = \"absent/corpus.jsonl\"\noutput = \"out\"\n",
    );
    let out = hfrag(&["index", "-c", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("absent/corpus.jsonl"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(hfrag(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        hfrag(&["fuse", "--mode", "best_mode"]).status.code(),
        Some(1)
    );
    assert_eq!(hfrag(&["--help"]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "colour = \"blue\"\n[paths]\noutput = \"out\"\n");
    assert_eq!(
        hfrag(&["index", "-c", cfg.to_str().unwrap()]).status.code(),
        Some(1)
    );
}

#[test]
fn malformed_data_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("corpus.jsonl"),
        "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\n",
    )
    .unwrap();
    let cfg = write_config(
        dir.path(),
        "[paths]\ncorpus = \"corpus.jsonl\"\noutput = \"out\"\n",
    );
    let out = hfrag(&["index", "-c", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn index_and_retrieve_are_reproducible() {
    let toy = Toy::prepared();
    let index = toy.read("index/unlabeled.json");
    let run = toy.read("runs/unlabeled/bm25.run");
    toy.run(&["index"]);
    toy.run(&["retrieve"]);
    assert_eq!(toy.read("index/unlabeled.json"), index);
    assert_eq!(toy.read("runs/unlabeled/bm25.run"), run);
    let runs = parse_run_file(&run, None).unwrap();
    assert!(runs.iter().all(|r| r.tag() == "unlabeled:bm25"));
    assert!(toy
        .read("index/resolved-config.toml")
        .contains("pool_depth = 50"));
}

#[test]
fn retrieval_returns_only_matching_documents() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("corpus.jsonl"),
        "{\"id\":\"a\",\"text\":\"red fox\"}\n{\"id\":\"b\",\"text\":\"grey wolf\"}\n{\"id\":\"c\",\"text\":\"red wolf\"}\n{\"id\":\"d\",\"text\":\"fox den\"}\n{\"id\":\"e\",\"text\":\"owl\"}\n",
    )
    .unwrap();
    std::fs::write(
        dir.path().join("claims.jsonl"),
        "{\"id\":\"q\",\"text\":\"red fox\"}\n",
    )
    .unwrap();
    let cfg = write_config(
        dir.path(),
        "[paths]\ncorpus = \"corpus.jsonl\"\nclaims = \"claims.jsonl\"\noutput = \"out\"\n",
    );
    let c = cfg.to_str().unwrap();
    ok(&["index", "-c", c]);
    ok(&["retrieve", "-c", c]);
    let run = std::fs::read_to_string(dir.path().join("out/runs/unlabeled/bm25.run")).unwrap();
    let docs: Vec<&str> = run.lines().map(|l| l.split(' ').nth(2).unwrap()).collect();
    assert_eq!(docs, ["a", "c", "d"]);
}

#[test]
fn single_ranker_mode_rejects_two_runs() {
    let toy = Toy::prepared();
    let bm25 = toy.out.join("runs/labeled/bm25.run");
    let trigram = fixture("toy/runs/labeled/trigram.run");
    let runs = [
        format!("--run={}", bm25.display()),
        format!("--run={}", trigram.display()),
    ];
    let out = hfrag(&toy.args("fuse", &["--mode", "l_rag", &runs[0], &runs[1]]));
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("expects exactly one"),
        "{}",
        stderr(&out)
    );
    // One explicit run is fine.
    ok(&toy.args("fuse", &["--mode", "l_rag", &runs[1]]));
}

fn toy_pool(toy: &Toy) -> RunPool {
    let mut runs: Vec<RankedRun> = Vec::new();
    for path in [
        toy.out.join("runs/labeled/bm25.run"),
        fixture("toy/runs/labeled/trigram.run"),
        toy.out.join("runs/unlabeled/bm25.run"),
        fixture("toy/runs/unlabeled/trigram.run"),
    ] {
        runs.extend(parse_run_file(&std::fs::read_to_string(path).unwrap(), None).unwrap());
    }
    RunPool::new(runs).unwrap()
}

fn toy_claims() -> Vec<hfrag_core::Claim> {
    read_claims(&std::fs::read_to_string(fixture("toy/claims.jsonl")).unwrap()).unwrap()
}

fn toy_stores() -> SourceStores {
    SourceStores::new(
        read_labeled(&std::fs::read_to_string(fixture("toy/labeled.jsonl")).unwrap()).unwrap(),
        read_corpus(&std::fs::read_to_string(fixture("toy/corpus.jsonl")).unwrap()).unwrap(),
    )
    .unwrap()
}

#[test]
fn fuse_matches_library_composition() {
    let toy = Toy::prepared();
    toy.run(&["fuse", "--mode", "hf_rag"]);
    let pool = toy_pool(&toy);
    let config = FusionConfig::default();

    let mut merged = String::new();
    let mut fused_l = String::new();
    for claim in toy_claims() {
        let l = rrf_fuse(&pool.runs_for(SourceTag::Labeled, &claim.id), &config).unwrap();
        let u = rrf_fuse(&pool.runs_for(SourceTag::Unlabeled, &claim.id), &config).unwrap();
        hierarchical_fuse(&l, &u, &config)
            .unwrap()
            .write_run_lines("hfrag", &mut merged);
        l.write_run_lines(&mut fused_l);
    }
    assert_eq!(toy.read("hf_rag/merged.run"), merged);
    assert_eq!(toy.read("hf_rag/fused-labeled.run"), fused_l);
    let contexts = toy.read("hf_rag/context.jsonl");
    assert_eq!(contexts.lines().count(), 12);
}

#[test]
fn every_output_is_byte_identical_on_rerun() {
    let toy = Toy::prepared();
    let steps: &[&[&str]] = &[
        &["fuse", "--mode", "lu_rag_alpha"],
        &["predict", "--mode", "lu_rag_alpha"],
        &["eval", "--mode", "lu_rag_alpha"],
        &["sweep", "--mode", "hf_rag"],
        &["optsel"],
    ];
    let snapshot = |root: &Path| -> BTreeMap<PathBuf, Vec<u8>> {
        let mut files = BTreeMap::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in std::fs::read_dir(dir).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    files.insert(path.clone(), std::fs::read(&path).unwrap());
                }
            }
        }
        files
    };
    for step in steps {
        toy.run(step);
    }
    let first = snapshot(&toy.out);
    for step in steps {
        toy.run(step);
    }
    assert_eq!(snapshot(&toy.out), first);
}

#[test]
fn external_predictor_reads_prediction_file() {
    let toy = Toy::prepared();
    toy.run(&["fuse", "--mode", "u_rag_rrf"]);
    let out = toy.run(&["predict", "--mode", "u_rag_rrf", "--predictor", "external"]);
    assert!(out.contains("12 prompts"));
    assert!(!toy.out.join("u_rag_rrf/predictions.jsonl").exists());

    let missing = hfrag(&toy.args("eval", &["--mode", "u_rag_rrf", "--predictor", "external"]));
    assert_eq!(missing.status.code(), Some(2));
    assert!(
        stderr(&missing).contains("predictions.jsonl"),
        "{}",
        stderr(&missing)
    );

    // A perfect external predictor.
    let mut lines = String::new();
    for claim in toy_claims() {
        lines.push_str(&format!(
            "{{\"id\":\"{}\",\"label\":\"{}\"}}\n",
            claim.id,
            claim.gold_label.unwrap()
        ));
    }
    let preds = toy.out.join("external.jsonl");
    std::fs::write(&preds, lines).unwrap();
    toy.run(&[
        "eval",
        "--mode",
        "u_rag_rrf",
        "--predictor",
        "external",
        "--predictions",
        preds.to_str().unwrap(),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&toy.read("u_rag_rrf/report.json")).unwrap();
    assert_eq!(report["classification"]["macro_f1"], 1.0);
}

#[test]
fn optsel_matches_exhaustive_library_search() {
    let toy = Toy::prepared();
    toy.run(&["optsel"]);
    let pool = toy_pool(&toy);
    let claims = toy_claims();
    let stores = toy_stores();
    let ids: Vec<_> = claims.iter().map(|c| c.id.clone()).collect();
    let gold = gold_labels(&claims).unwrap();

    let mut per_config = BTreeMap::new();
    for (source, ranker) in pool.configs() {
        let mode = if source == SourceTag::Labeled {
            Mode::LRag
        } else {
            Mode::URag
        };
        let out = run_fusion(
            mode,
            &pool.select(source, &ranker),
            &ids,
            &FusionConfig::default(),
            None,
        )
        .unwrap();
        let records = assemble_all(&claims, &out.contexts, &stores, DEFAULT_TEMPLATE).unwrap();
        per_config.insert(ConfigId { source, ranker }, baseline_predictions(&records));
    }
    assert_eq!(per_config.len(), 4);
    let expected = optsel(&per_config, &gold).unwrap();
    let best_by_scan = per_config
        .values()
        .map(|p| macro_f1(&gold, p).unwrap().macro_f1)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(expected.report.macro_f1, best_by_scan);

    let file: serde_json::Value = serde_json::from_str(&toy.read("optsel/optsel.json")).unwrap();
    assert_eq!(file["best"], expected.best.to_string());
    assert_eq!(file["macro_f1"], expected.report.macro_f1);
    for (config, score) in &expected.scores {
        assert_eq!(file["scores"][config.to_string()], *score);
    }
}

#[test]
fn sweep_writes_csv_and_alpha_grid() {
    let toy = Toy::prepared();
    let out = toy.run(&[
        "sweep",
        "--mode",
        "lu_rag_alpha",
        "--sizes",
        "2,4",
        "--alpha-grid",
        "0,0.5,1",
    ]);
    assert!(out.starts_with("size,macro_f1\n2,"), "{out}");
    let grid = toy.read("sweep-lu_rag_alpha/alpha-grid.csv");
    assert_eq!(grid.lines().count(), 4);
    assert!(toy
        .out
        .join("sweep-lu_rag_alpha/k4/prompts.jsonl")
        .is_file());
}

#[test]
fn lu_rag_alpha_without_alpha_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "mode = \"lu_rag_alpha\"\n[paths]\noutput = \"out\"\n",
    );
    let out = hfrag(&["fuse", "-c", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("requires alpha"));
}

#[test]
fn alpha_grid_optimum_matches_exhaustive_search() {
    let toy = Toy::prepared();
    let grid = [
        "0", "0.1", "0.2", "0.3", "0.4", "0.5", "0.6", "0.7", "0.8", "0.9", "1",
    ];
    toy.run(&[
        "sweep",
        "--mode",
        "lu_rag_alpha",
        "--sizes",
        "10",
        "--alpha-grid",
        &grid.join(","),
    ]);
    let csv = toy.read("sweep-lu_rag_alpha/alpha-grid.csv");

    let pool = toy_pool(&toy);
    let claims = toy_claims();
    let stores = toy_stores();
    let ids: Vec<_> = claims.iter().map(|c| c.id.clone()).collect();
    let gold = gold_labels(&claims).unwrap();
    let mut expected = String::from("alpha,macro_f1\n");
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for alpha in grid.iter().map(|a| a.parse::<f64>().unwrap()) {
        let out = run_fusion(
            Mode::LuRagAlpha,
            &pool,
            &ids,
            &FusionConfig::default(),
            Some(alpha),
        )
        .unwrap();
        let records = assemble_all(&claims, &out.contexts, &stores, DEFAULT_TEMPLATE).unwrap();
        let f1 = macro_f1(&gold, &baseline_predictions(&records))
            .unwrap()
            .macro_f1;
        expected.push_str(&format!("{alpha},{f1}\n"));
        if f1 > best.1 {
            best = (alpha, f1);
        }
    }
    assert_eq!(csv, expected);
    // Frozen from the exhaustive scan above: one labeled exemplar plus nine
    // passages wins on this fixture.
    assert_eq!(best.0, 0.9);
}
