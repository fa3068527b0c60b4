//! Embedded BM25 retriever.
//!
//! Scoring follows the Robertson–Walker form with a plus-one idf,
//! `ln((N - df + 0.5) / (df + 0.5) + 1)`, which stays positive for every
//! document frequency. Each distinct query term contributes once.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{DocId, LabeledExample, Passage, QueryId, RankedRun, RankerTag, SourceTag};

pub const INDEX_FORMAT: &str = "hfrag-bm25-index";
pub const INDEX_VERSION: u32 = 1;

/// Lowercases and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self> {
        if !(k1.is_finite() && k1 >= 0.0) {
            return Err(Error::invalid(
                "bm25 k1",
                format!("{k1} must be non-negative"),
            ));
        }
        if !(0.0..=1.0).contains(&b) {
            return Err(Error::invalid("bm25 b", format!("{b} must lie in [0, 1]")));
        }
        Ok(Bm25Params { k1, b })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

/// Term statistics over an immutable document collection.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    doc_ids: Vec<DocId>,
    doc_lengths: Vec<u32>,
    postings: HashMap<String, Vec<Posting>>,
    avg_doc_length: f64,
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    format: String,
    version: u32,
    doc_ids: Vec<DocId>,
    doc_lengths: Vec<u32>,
    postings: BTreeMap<String, Vec<(u32, u32)>>,
}

impl InvertedIndex {
    /// Indexes `(id, text)` pairs. Fails on duplicate ids or when no
    /// document yields a single token.
    pub fn build<'a>(docs: impl IntoIterator<Item = (DocId, &'a str)>) -> Result<Self> {
        let mut doc_ids = Vec::new();
        let mut doc_lengths = Vec::new();
        let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
        let mut seen = HashSet::new();

        for (id, text) in docs {
            if !seen.insert(id.clone()) {
                return Err(Error::DuplicateDoc(id));
            }
            let doc = u32::try_from(doc_ids.len())
                .map_err(|_| Error::invalid("corpus", "more than u32::MAX documents"))?;
            let tokens = tokenize(text);
            let mut counts: HashMap<String, u32> = HashMap::new();
            for token in &tokens {
                *counts.entry(token.clone()).or_default() += 1;
            }
            for (term, tf) in counts {
                postings.entry(term).or_default().push(Posting { doc, tf });
            }
            doc_ids.push(id);
            doc_lengths.push(tokens.len() as u32);
        }
        Self::from_parts(doc_ids, doc_lengths, postings)
    }

    fn from_parts(
        doc_ids: Vec<DocId>,
        doc_lengths: Vec<u32>,
        postings: HashMap<String, Vec<Posting>>,
    ) -> Result<Self> {
        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        if doc_ids.is_empty() || total == 0 {
            return Err(Error::EmptyCorpus);
        }
        let avg_doc_length = total as f64 / doc_ids.len() as f64;
        Ok(InvertedIndex {
            doc_ids,
            doc_lengths,
            postings,
            avg_doc_length,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_id(&self, doc: u32) -> &DocId {
        &self.doc_ids[doc as usize]
    }

    pub fn doc_length(&self, doc: u32) -> u32 {
        self.doc_lengths[doc as usize]
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    pub fn idf(&self, df: usize) -> f64 {
        let n = self.doc_count() as f64;
        let df = df as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    /// Top `depth` documents with a positive score, best first; equal scores
    /// are ordered by document id.
    pub fn search(&self, params: &Bm25Params, query: &str, depth: usize) -> Vec<(DocId, f64)> {
        let mut terms = tokenize(query);
        terms.sort();
        terms.dedup();

        let mut scores = vec![0.0f64; self.doc_count()];
        let mut touched = Vec::new();
        for term in &terms {
            let postings = self.postings(term);
            if postings.is_empty() {
                continue;
            }
            let idf = self.idf(postings.len());
            for p in postings {
                let slot = &mut scores[p.doc as usize];
                if *slot == 0.0 {
                    touched.push(p.doc);
                }
                *slot += idf * self.saturate(params, p.tf, self.doc_lengths[p.doc as usize]);
            }
        }

        let cmp = |a: &u32, b: &u32| {
            scores[*b as usize]
                .total_cmp(&scores[*a as usize])
                .then_with(|| self.doc_ids[*a as usize].cmp(&self.doc_ids[*b as usize]))
        };
        touched.retain(|&d| scores[d as usize] > 0.0);
        if depth == 0 {
            return Vec::new();
        }
        if touched.len() > depth {
            touched.select_nth_unstable_by(depth - 1, cmp);
            touched.truncate(depth);
        }
        touched.sort_unstable_by(cmp);
        touched
            .into_iter()
            .map(|d| (self.doc_ids[d as usize].clone(), scores[d as usize]))
            .collect()
    }

    fn saturate(&self, params: &Bm25Params, tf: u32, doc_length: u32) -> f64 {
        let tf = tf as f64;
        let norm = 1.0 - params.b + params.b * doc_length as f64 / self.avg_doc_length;
        tf * (params.k1 + 1.0) / (tf + params.k1 * norm)
    }

    /// Runs [`search`](Self::search) and packages the result as a run.
    pub fn retrieve(
        &self,
        params: &Bm25Params,
        query_id: &QueryId,
        query: &str,
        depth: usize,
        source: SourceTag,
        ranker: &RankerTag,
    ) -> RankedRun {
        RankedRun::from_ordered(
            query_id.clone(),
            source,
            ranker.clone(),
            self.search(params, query, depth),
        )
    }

    /// Serializes to JSON with a format/version header. Terms are written in
    /// sorted order so rebuilding from the same corpus gives identical bytes.
    pub fn to_json(&self) -> Result<String> {
        let file = IndexFile {
            format: INDEX_FORMAT.to_string(),
            version: INDEX_VERSION,
            doc_ids: self.doc_ids.clone(),
            doc_lengths: self.doc_lengths.clone(),
            postings: self
                .postings
                .iter()
                .map(|(term, list)| (term.clone(), list.iter().map(|p| (p.doc, p.tf)).collect()))
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: IndexFile = serde_json::from_str(text)?;
        if file.format != INDEX_FORMAT || file.version != INDEX_VERSION {
            return Err(Error::invalid(
                "index file",
                format!(
                    "expected {INDEX_FORMAT} v{INDEX_VERSION}, found {} v{}",
                    file.format, file.version
                ),
            ));
        }
        if file.doc_ids.len() != file.doc_lengths.len() {
            return Err(Error::invalid(
                "index file",
                "doc id and length tables differ in size",
            ));
        }
        let n = file.doc_ids.len() as u32;
        let mut postings = HashMap::with_capacity(file.postings.len());
        for (term, list) in file.postings {
            if list.iter().any(|&(doc, tf)| doc >= n || tf == 0) {
                return Err(Error::invalid(
                    "index file",
                    format!("bad posting for {term:?}"),
                ));
            }
            postings.insert(
                term,
                list.into_iter()
                    .map(|(doc, tf)| Posting { doc, tf })
                    .collect(),
            );
        }
        Self::from_parts(file.doc_ids, file.doc_lengths, postings)
    }
}

/// Indexes passage titles together with their text.
pub fn build_index(corpus: &[Passage]) -> Result<InvertedIndex> {
    let texts: Vec<(DocId, String)> = corpus
        .iter()
        .map(|p| {
            let text = match &p.title {
                Some(title) => format!("{title} {}", p.text),
                None => p.text.clone(),
            };
            (p.id.clone(), text)
        })
        .collect();
    InvertedIndex::build(texts.iter().map(|(id, t)| (id.clone(), t.as_str())))
}

/// Indexes the claim text of labeled examples.
pub fn build_labeled_index(store: &[LabeledExample]) -> Result<InvertedIndex> {
    InvertedIndex::build(store.iter().map(|e| (e.id.clone(), e.claim_text.as_str())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> DocId {
        DocId::new(s).unwrap()
    }

    fn fixture() -> InvertedIndex {
        InvertedIndex::build([
            (id("d1"), "polar bears hunt seals on sea ice"),
            (id("d2"), "brown bears eat berries"),
            (id("d3"), "sea ice melts in summer"),
        ])
        .unwrap()
    }

    #[test]
    fn tokenizer_examples() {
        assert_eq!(
            tokenize("Polar bears, 2 bears!"),
            ["polar", "bears", "2", "bears"]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("Global-warming"), ["global", "warming"]);
    }

    #[test]
    fn corpus_statistics() {
        let index = InvertedIndex::build([
            (id("a"), "one two three"),
            (id("b"), "one two three four five"),
        ])
        .unwrap();
        assert_eq!(index.avg_doc_length(), 4.0);
        assert_eq!(index.doc_count(), 2);
        assert_eq!(fixture().doc_count(), 3);
    }

    #[test]
    fn empty_and_duplicate_corpora_rejected() {
        assert!(matches!(
            InvertedIndex::build(std::iter::empty()),
            Err(Error::EmptyCorpus)
        ));
        let err = InvertedIndex::build([(id("a"), "x"), (id("a"), "y")]).unwrap_err();
        assert!(matches!(err, Error::DuplicateDoc(ref d) if d.as_str() == "a"));
    }

    #[test]
    fn single_term_scores_match_hand_computation() {
        // N = 3, df(bears) = 2, avgdl = 16/3, idf = ln(1.5 / 2.5 + 1) = ln 1.6.
        let hits = fixture().search(&Bm25Params::default(), "bears", 50);
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].0.as_str(), "d2");
        assert!((hits[0].1 - 0.523548346501579).abs() < 1e-6);
        assert_eq!(hits[1].0.as_str(), "d1");
        assert!((hits[1].1 - 0.41672865867631975).abs() < 1e-6);
    }

    #[test]
    fn no_matching_terms_gives_empty_run() {
        let run = fixture().retrieve(
            &Bm25Params::default(),
            &QueryId::new("q").unwrap(),
            "volcano",
            50,
            SourceTag::Unlabeled,
            &RankerTag::new("bm25").unwrap(),
        );
        assert!(run.is_empty());
    }

    #[test]
    fn depth_one_returns_the_best_document() {
        let hits = fixture().search(&Bm25Params::default(), "sea ice summer", 1);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].0.as_str(), "d3");
    }

    #[test]
    fn json_roundtrip_and_header_check() {
        let index = fixture();
        let json = index.to_json().unwrap();
        assert_eq!(InvertedIndex::from_json(&json).unwrap(), index);
        assert_eq!(fixture().to_json().unwrap(), json);
        let tampered = json.replace("\"version\":1", "\"version\":9");
        assert!(InvertedIndex::from_json(&tampered).is_err());
    }

    #[test]
    fn params_validated() {
        assert!(Bm25Params::new(-1.0, 0.5).is_err());
        assert!(Bm25Params::new(1.2, 1.5).is_err());
        assert_eq!(Bm25Params::new(1.2, 0.75).unwrap(), Bm25Params::default());
    }
}
