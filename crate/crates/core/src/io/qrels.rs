use crate::error::{Error, Result};
use crate::types::{DocId, Qrels, QueryId};

/// Parses `qid iter docid grade` lines. The second column is ignored.
pub fn parse_qrels(text: &str) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                lineno,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let query = QueryId::new(fields[0]).map_err(|e| Error::parse(lineno, e.to_string()))?;
        let doc = DocId::new(fields[2]).map_err(|e| Error::parse(lineno, e.to_string()))?;
        let grade: u32 = fields[3].parse().map_err(|_| {
            Error::parse(
                lineno,
                format!("grade {:?} is not a non-negative integer", fields[3]),
            )
        })?;
        qrels
            .insert(query, doc, grade)
            .map_err(|e| Error::parse(lineno, e.to_string()))?;
    }
    Ok(qrels)
}
