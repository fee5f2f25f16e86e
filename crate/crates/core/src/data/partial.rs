use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Annotation, Corpus};
use crate::error::{Error, Result};
use crate::labels::{seg_projection, type_projection};

/// Which projection a partially labeled sentence keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Projection {
    Seg,
    Typ,
}

impl fmt::Display for Projection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Projection::Seg => "seg",
            Projection::Typ => "typ",
        })
    }
}

impl FromStr for Projection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "seg" | "segonly" => Ok(Projection::Seg),
            "typ" | "type" | "typeonly" => Ok(Projection::Typ),
            _ => Err(Error::Config(format!("unknown projection `{s}`"))),
        }
    }
}

/// What happens to the sentences that are not projected.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Remainder {
    Drop,
    KeepFull,
}

/// Re-tags a seeded random `fraction` of a fully labeled corpus with only
/// one projection of its labels.
pub fn project_partial(
    corpus: &Corpus,
    keep: Projection,
    fraction: f64,
    seed: u64,
    remainder: Remainder,
) -> Result<Corpus> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!("fraction {fraction} is outside [0, 1]")));
    }
    if !corpus.is_fully_labeled() {
        return Err(Error::Usage("partial projection needs a fully labeled corpus".into()));
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = (fraction * corpus.len() as f64).round() as usize;
    let mut selected = vec![false; corpus.len()];
    for &i in &order[..n] {
        selected[i] = true;
    }
    let mut out = Vec::new();
    for (s, chosen) in corpus.sentences.iter().zip(selected) {
        if chosen {
            let labels = s.full_labels().expect("checked fully labeled");
            let mut p = s.clone();
            p.annotation = match keep {
                Projection::Seg => Annotation::SegOnly(seg_projection(labels)),
                Projection::Typ => Annotation::TypeOnly(type_projection(labels)),
            };
            out.push(p);
        } else if remainder == Remainder::KeepFull {
            out.push(s.clone());
        }
    }
    Ok(corpus.with_sentences(out, format!("{} {keep}-only {fraction}", corpus.provenance)))
}
