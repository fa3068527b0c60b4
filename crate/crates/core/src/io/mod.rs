//! Text formats for runs, judgments and JSONL records.

pub mod jsonl;
pub mod qrels;
pub mod runfile;

pub use jsonl::{read_claims, read_corpus, read_labeled};
pub use qrels::parse_qrels;
pub use runfile::{format_score, parse_run_file, parse_tag, write_run_file};
