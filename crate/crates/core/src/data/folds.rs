use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Corpus;
use crate::error::{Error, Result};

/// Share of each fold's non-test sentences held out for development.
pub const DEV_SHARE: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct Fold {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
}

/// k-fold cross-validation split: each fold tests on one part, keeps 10% of
/// the rest for development and trains on the remainder.
pub fn split_folds(corpus: &Corpus, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if corpus.len() < k {
        return Err(Error::Config(format!(
            "{} sentences cannot be split into {k} folds",
            corpus.len()
        )));
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let n = corpus.len();
    let bounds: Vec<usize> = (0..=k).map(|i| i * n / k).collect();
    let pick = |idx: &[usize], name: String| {
        corpus.with_sentences(idx.iter().map(|&i| corpus.sentences[i].clone()).collect(), name)
    };

    (0..k)
        .map(|f| {
            let test: Vec<usize> = order[bounds[f]..bounds[f + 1]].to_vec();
            let mut rest: Vec<usize> = order[..bounds[f]]
                .iter()
                .chain(&order[bounds[f + 1]..])
                .copied()
                .collect();
            rest.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(1 + f as u64)));
            let n_dev = (rest.len() as f64 * DEV_SHARE).round() as usize;
            let (dev, train) = rest.split_at(n_dev);
            Ok(Fold {
                train: pick(train, format!("{} fold {f} train", corpus.provenance)),
                dev: pick(dev, format!("{} fold {f} dev", corpus.provenance)),
                test: pick(&test, format!("{} fold {f} test", corpus.provenance)),
            })
        })
        .collect()
}
