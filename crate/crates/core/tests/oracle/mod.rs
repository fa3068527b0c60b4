//! Independent reference implementations used by property and acceptance
//! tests. Nothing here calls into the fusion or BM25 code it checks.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use hfrag_core::{DocId, FusedList, QueryId, RankedRun, RankerTag, SourceTag};
use num_bigint::BigUint;
use rand::seq::SliceRandom;
use rand::Rng;

/// Random runs for one (query, source): 1..=max_rankers rankers, each
/// returning up to `max_depth` documents drawn from a shared pool so that
/// overlaps are common.
pub fn random_runs<R: Rng>(
    rng: &mut R,
    source: SourceTag,
    max_rankers: usize,
    max_depth: usize,
) -> Vec<RankedRun> {
    let n_rankers = rng.random_range(1..=max_rankers);
    let pool_size = rng.random_range(1..=max_depth * 2);
    let prefix = match source {
        SourceTag::Labeled => "l",
        SourceTag::Unlabeled => "u",
    };
    let pool: Vec<DocId> = (0..pool_size)
        .map(|i| DocId::new(format!("{prefix}{i:03}")).unwrap())
        .collect();
    (0..n_rankers)
        .map(|r| {
            let depth = rng.random_range(0..=max_depth.min(pool_size));
            let mut docs = pool.clone();
            docs.shuffle(rng);
            let mut scores: Vec<f64> = (0..depth).map(|_| rng.random_range(-5.0..5.0)).collect();
            scores.sort_by(|a, b| b.total_cmp(a));
            RankedRun::from_ordered(
                QueryId::new("q").unwrap(),
                source,
                RankerTag::new(format!("ranker{r}")).unwrap(),
                docs.into_iter().zip(scores),
            )
        })
        .collect()
}

/// Exact fraction `num / den`.
#[derive(Clone, Debug)]
pub struct Frac {
    pub num: BigUint,
    pub den: BigUint,
}

impl Frac {
    fn zero() -> Self {
        Frac {
            num: BigUint::from(0u32),
            den: BigUint::from(1u32),
        }
    }

    fn add_reciprocal(&self, r: u32) -> Self {
        Frac {
            num: &self.num * r + &self.den,
            den: &self.den * r,
        }
    }

    pub fn cmp(&self, other: &Frac) -> Ordering {
        (&self.num * &other.den).cmp(&(&other.num * &self.den))
    }
}

/// Brute-force fusion: enumerate the union, sum exact reciprocals (with the
/// missing-rank constant) over every run, order by exact value then id.
pub fn rrf_oracle(
    runs: &[RankedRun],
    k: usize,
    pool_depth: usize,
    missing: u32,
) -> Vec<(DocId, f64)> {
    let cut: Vec<&[hfrag_core::RunEntry]> = runs
        .iter()
        .map(|r| &r.entries[..r.entries.len().min(pool_depth)])
        .collect();
    let union: BTreeSet<&DocId> = cut.iter().flat_map(|e| e.iter().map(|x| &x.doc)).collect();
    let mut scored: Vec<(DocId, Frac, f64)> = union
        .into_iter()
        .map(|doc| {
            let mut exact = Frac::zero();
            let mut approx = 0.0;
            for entries in &cut {
                let rank = entries
                    .iter()
                    .find(|e| &e.doc == doc)
                    .map_or(missing, |e| e.rank);
                exact = exact.add_reciprocal(rank);
                approx += 1.0 / rank as f64;
            }
            (doc.clone(), exact, approx)
        })
        .collect();
    scored.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored.into_iter().map(|(d, _, s)| (d, s)).collect()
}

/// Textbook mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mut total = 0.0;
    for x in xs {
        total += x;
    }
    let mean = total / n;
    let mut sq = 0.0;
    for x in xs {
        sq += (x - mean) * (x - mean);
    }
    (mean, (sq / n).sqrt())
}

pub fn standardize_oracle(list: &FusedList) -> Vec<(DocId, SourceTag, f64)> {
    let scores: Vec<f64> = list.entries().iter().map(|e| e.score).collect();
    if scores.is_empty() {
        return Vec::new();
    }
    let all_equal = scores.iter().all(|s| *s == scores[0]);
    let (mean, std) = mean_std(&scores);
    list.entries()
        .iter()
        .map(|e| {
            let z = if all_equal {
                0.0
            } else {
                (e.score - mean) / std
            };
            (e.doc.clone(), list.source(), z)
        })
        .collect()
}

/// Standardize each side, concatenate labeled then unlabeled, stable-sort by
/// z descending with labeled first on ties, keep k.
pub fn merge_oracle(
    labeled: &FusedList,
    unlabeled: &FusedList,
    k: usize,
) -> Vec<(DocId, SourceTag, f64)> {
    let mut all = standardize_oracle(labeled);
    all.extend(standardize_oracle(unlabeled));
    all.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| a.1.cmp(&b.1)));
    all.truncate(k);
    all
}

/// Scores every document directly from the BM25 formula.
pub fn bm25_brute_force(
    docs: &[(DocId, String)],
    query: &str,
    k1: f64,
    b: f64,
) -> BTreeMap<DocId, f64> {
    let tokenize = |t: &str| -> Vec<String> {
        t.to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect()
    };
    let tokenized: Vec<Vec<String>> = docs.iter().map(|(_, t)| tokenize(t)).collect();
    let n = docs.len() as f64;
    let avgdl = tokenized.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
    let mut out = BTreeMap::new();
    for (i, (id, _)) in docs.iter().enumerate() {
        let dl = tokenized[i].len() as f64;
        let mut score = 0.0;
        for term in &terms {
            let tf = tokenized[i].iter().filter(|t| *t == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let df = tokenized.iter().filter(|d| d.contains(term)).count() as f64;
            let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
            score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
        }
        if score > 0.0 {
            out.insert(id.clone(), score);
        }
    }
    out
}

/// Top `depth` of the brute-force scores, ties by id.
pub fn bm25_top(scores: &BTreeMap<DocId, f64>, depth: usize) -> Vec<(DocId, f64)> {
    let mut v: Vec<(DocId, f64)> = scores.iter().map(|(d, s)| (d.clone(), *s)).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.truncate(depth);
    v
}

pub fn random_corpus<R: Rng>(rng: &mut R, n_docs: usize, vocab: usize) -> Vec<(DocId, String)> {
    (0..n_docs)
        .map(|i| {
            let len = rng.random_range(1..12);
            let words: Vec<String> = (0..len)
                .map(|_| format!("w{}", rng.random_range(0..vocab)))
                .collect();
            (DocId::new(format!("d{i:03}")).unwrap(), words.join(" "))
        })
        .collect()
}
