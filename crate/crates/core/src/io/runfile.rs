//! TREC-style run files: `qid Q0 docid rank score tag`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::types::{DocId, QueryId, RankedRun, RankerTag, RunEntry, SourceTag};

/// Splits a `source:ranker` tag.
pub fn parse_tag(tag: &str) -> Result<(SourceTag, RankerTag)> {
    let (source, ranker) = tag.split_once(':').ok_or_else(|| {
        Error::invalid(
            "run tag",
            format!("{tag:?} is not of the form source:ranker"),
        )
    })?;
    Ok((source.parse()?, RankerTag::new(ranker)?))
}

/// Parses a run file into one [`RankedRun`] per (query, source, ranker).
///
/// When `meta` is given it overrides whatever the tag column says. Otherwise
/// the tag must read `source:ranker`. Runs come back ordered by query, then
/// source, then ranker; entries are sorted by rank (document id on equal rank).
pub fn parse_run_file(text: &str, meta: Option<&(SourceTag, RankerTag)>) -> Result<Vec<RankedRun>> {
    type Key = (QueryId, SourceTag, RankerTag);
    let mut groups: BTreeMap<Key, Vec<RunEntry>> = BTreeMap::new();
    let mut seen: HashMap<(Key, DocId), usize> = HashMap::new();

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::parse(
                lineno,
                format!("expected 6 fields, found {}", fields.len()),
            ));
        }
        let query = QueryId::new(fields[0]).map_err(|e| Error::parse(lineno, e.to_string()))?;
        let doc = DocId::new(fields[2]).map_err(|e| Error::parse(lineno, e.to_string()))?;
        let rank: u32 = fields[3].parse().map_err(|_| {
            Error::parse(
                lineno,
                format!("rank {:?} is not a positive integer", fields[3]),
            )
        })?;
        if rank == 0 {
            return Err(Error::parse(lineno, "rank must be at least 1"));
        }
        let score: f64 = fields[4]
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| {
                Error::parse(
                    lineno,
                    format!("score {:?} is not a finite number", fields[4]),
                )
            })?;
        let (source, ranker) = match meta {
            Some((source, ranker)) => (*source, ranker.clone()),
            None => parse_tag(fields[5]).map_err(|e| Error::parse(lineno, e.to_string()))?,
        };

        let key = (query, source, ranker);
        if let Some(first) = seen.insert((key.clone(), doc.clone()), lineno) {
            return Err(Error::Validation(format!(
                "line {lineno}: document {doc} already listed for query {} on line {first}",
                key.0
            )));
        }
        groups
            .entry(key)
            .or_default()
            .push(RunEntry { doc, rank, score });
    }

    Ok(groups
        .into_iter()
        .map(|((query, source, ranker), mut entries)| {
            entries.sort_by(|a, b| a.rank.cmp(&b.rank).then_with(|| a.doc.cmp(&b.doc)));
            RankedRun {
                query,
                source,
                ranker,
                entries,
            }
        })
        .collect())
}

/// Renders a score as its shortest round-trip decimal, padded with trailing
/// zeros to at least six significant digits.
pub fn format_score(score: f64) -> String {
    if score == 0.0 {
        return "0.00000".to_string();
    }
    let mut out = format!("{score}");
    let significant = out
        .chars()
        .filter(char::is_ascii_digit)
        .skip_while(|&c| c == '0')
        .count();
    if significant < 6 {
        if !out.contains('.') {
            out.push('.');
        }
        out.extend(std::iter::repeat_n('0', 6 - significant));
    }
    out
}

pub(crate) fn push_line(
    out: &mut String,
    query: &QueryId,
    doc: &DocId,
    rank: usize,
    score: f64,
    tag: &str,
) {
    let _ = writeln!(out, "{query} Q0 {doc} {rank} {} {tag}", format_score(score));
}

pub fn write_run_file(runs: &[RankedRun]) -> String {
    let mut out = String::new();
    for run in runs {
        let tag = run.tag();
        for entry in &run.entries {
            push_line(
                &mut out,
                &run.query,
                &entry.doc,
                entry.rank as usize,
                entry.score,
                &tag,
            );
        }
    }
    out
}
