//! Synthetic inputs for the benchmarks.

use hfrag_core::{DocId, Passage, QueryId, RankedRun, RankerTag, SourceTag};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n_rankers` runs of `depth` documents drawn from a pool of `pool` ids.
pub fn random_runs(
    seed: u64,
    source: SourceTag,
    n_rankers: usize,
    depth: usize,
    pool: usize,
) -> Vec<RankedRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<DocId> = (0..pool)
        .map(|i| DocId::new(format!("{}{i:05}", &source.as_str()[..1])).unwrap())
        .collect();
    (0..n_rankers)
        .map(|r| {
            let mut docs = ids.clone();
            docs.shuffle(&mut rng);
            RankedRun::from_ordered(
                QueryId::new("q").unwrap(),
                source,
                RankerTag::new(format!("r{r}")).unwrap(),
                docs.into_iter()
                    .take(depth)
                    .enumerate()
                    .map(|(i, d)| (d, (depth - i) as f64)),
            )
        })
        .collect()
}

/// Passages of random words over a Zipf-ish vocabulary.
pub fn random_corpus(seed: u64, n_docs: usize, words_per_doc: usize, vocab: usize) -> Vec<Passage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_docs)
        .map(|i| {
            let text: Vec<String> = (0..words_per_doc)
                .map(|_| {
                    let u: f64 = rng.random_range(0.0..1.0);
                    format!("w{}", (u * u * vocab as f64) as usize)
                })
                .collect();
            Passage::new(
                DocId::new(format!("p{i:06}")).unwrap(),
                text.join(" "),
                None,
            )
            .unwrap()
        })
        .collect()
}
