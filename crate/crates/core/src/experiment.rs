//! Weak-supervision experiment protocols.
//!
//! * `KnowledgeIntegration`: the training pool is split into three disjoint
//!   folds, used as segmentation-only, type-only and full labels; a grid
//!   fraction of the full fold is used. The modular model trains on all
//!   three; the baseline on the full part only.
//! * `PartialCurve`: a fixed share of the pool keeps full labels and a grid
//!   fraction of the pool is added with one projection only.
//! * `DomainTransfer`: as `PartialCurve`, but the partial type labels come
//!   from an out-of-domain corpus.
//!
//! Every grid point reports the modular system and the baseline trained on
//! the full labels alone, evaluated on full prediction of the test corpus.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::data::{
    generate_synthetic_corpus, project_partial, Corpus, EmbeddingTable, Projection, Remainder,
    SynthSpec, Vocabulary,
};
use crate::encoder::seeded;
use crate::error::{Error, Result};
use crate::eval::{median, EvalMode};
use crate::model::{Model, ModelVariant};
use crate::train::{evaluate, train, TrainOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Protocol {
    KnowledgeIntegration,
    PartialCurve,
    DomainTransfer,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::KnowledgeIntegration => "knowledge-integration",
            Protocol::PartialCurve => "partial-curve",
            Protocol::DomainTransfer => "domain-transfer",
        })
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "knowledge-integration" | "ki" => Ok(Protocol::KnowledgeIntegration),
            "partial-curve" | "curve" => Ok(Protocol::PartialCurve),
            "domain-transfer" | "domain" => Ok(Protocol::DomainTransfer),
            _ => Err(Error::Config(format!("unknown protocol `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub protocol: Protocol,
    /// Fractions of the pool (or of the full fold, or of the out-of-domain
    /// corpus, depending on the protocol).
    pub grid: Vec<f64>,
    pub partial: Projection,
    pub seeds: Vec<u64>,
    /// Share of the pool that keeps full labels in the curve protocols.
    pub full_fraction: f64,
}

impl ExperimentSpec {
    pub fn new(protocol: Protocol, grid: Vec<f64>, seeds: Vec<u64>) -> Self {
        ExperimentSpec {
            protocol,
            grid,
            partial: match protocol {
                Protocol::DomainTransfer => Projection::Typ,
                _ => Projection::Seg,
            },
            seeds,
            full_fraction: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.grid.is_empty() || self.seeds.is_empty() {
            return bad("the fraction grid and the seed list must be nonempty".into());
        }
        if let Some(f) = self.grid.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return bad(format!("grid fraction {f} is outside [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.full_fraction) {
            return bad(format!("full fraction {} is outside [0, 1]", self.full_fraction));
        }
        if self.protocol == Protocol::PartialCurve {
            if let Some(f) = self.grid.iter().find(|&&f| f + self.full_fraction > 1.0 + 1e-12) {
                return bad(format!(
                    "partial fraction {f} plus the full share {} exceeds the training pool",
                    self.full_fraction
                ));
            }
        }
        Ok(())
    }
}

/// Corpora an experiment draws from; all fully labeled.
#[derive(Clone, Debug)]
pub struct ExperimentData {
    pub pool: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
    pub out_of_domain: Option<Corpus>,
}

impl ExperimentData {
    /// Synthetic in-domain pool, dev and test sets, plus an out-of-domain
    /// corpus of `ood` sentences drawn from domain `spec.domain + 1`.
    pub fn synthetic(spec: &SynthSpec, train: usize, dev: usize, test: usize, ood: usize, seed: u64) -> Result<Self> {
        let all = generate_synthetic_corpus(
            &SynthSpec {
                sentences: train + dev + test,
                ..spec.clone()
            },
            seed,
        )?;
        let take = |r: std::ops::Range<usize>, name: &str| {
            all.with_sentences(all.sentences[r].to_vec(), format!("{} {name}", all.provenance))
        };
        let out_of_domain = if ood > 0 {
            Some(generate_synthetic_corpus(
                &SynthSpec {
                    sentences: ood,
                    domain: spec.domain + 1,
                    ..spec.clone()
                },
                seed.wrapping_add(1),
            )?)
        } else {
            None
        };
        Ok(ExperimentData {
            pool: take(0..train, "pool"),
            dev: take(train..train + dev, "dev"),
            test: take(train + dev..train + dev + test, "test"),
            out_of_domain,
        })
    }
}

/// One result row.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub fraction: f64,
    pub seed: u64,
    pub system: String,
    pub f1: f64,
    /// Number of training sentences per availability: full, seg, typ.
    pub sizes: (usize, usize, usize),
    pub dev_curve: Vec<f64>,
}

pub fn results_table(rows: &[ResultRow]) -> String {
    let mut s = String::from("fraction\tseed\tsystem\tf1\tfull\tseg\ttyp\n");
    for r in rows {
        s.push_str(&format!(
            "{}\t{}\t{}\t{:.4}\t{}\t{}\t{}\n",
            r.fraction, r.seed, r.system, r.f1, r.sizes.0, r.sizes.1, r.sizes.2
        ));
    }
    s
}

/// Median F1 over seeds for every (fraction, system) pair, in first-seen
/// order.
pub fn median_f1(rows: &[ResultRow]) -> Vec<(f64, String, f64)> {
    let mut keys: Vec<(f64, String)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|(f, s)| *f == r.fraction && *s == r.system) {
            keys.push((r.fraction, r.system.clone()));
        }
    }
    keys.into_iter()
        .map(|(fraction, system)| {
            let f1s: Vec<f64> = rows
                .iter()
                .filter(|r| r.fraction == fraction && r.system == system)
                .map(|r| r.f1)
                .collect();
            let m = median(&f1s).expect("at least one row per key");
            (fraction, system, m)
        })
        .collect()
}

fn shuffled(corpus: &Corpus, seed: u64) -> Corpus {
    let mut s = corpus.sentences.clone();
    s.shuffle(&mut seeded(seed));
    corpus.with_sentences(s, corpus.provenance.clone())
}

fn slice(corpus: &Corpus, from: usize, to: usize) -> Corpus {
    corpus.with_sentences(corpus.sentences[from..to].to_vec(), corpus.provenance.clone())
}

fn count(n: usize, fraction: f64) -> usize {
    (fraction * n as f64).round() as usize
}

fn projected(corpus: &Corpus, keep: Projection) -> Result<Corpus> {
    project_partial(corpus, keep, 1.0, 0, Remainder::Drop)
}

/// Trains one model of `variant` on `train_corpus` with the run's settings.
pub fn fit(
    variant: ModelVariant,
    train_corpus: &Corpus,
    dev: &Corpus,
    run: &RunConfig,
    pretrained: Option<&EmbeddingTable>,
    seed: u64,
) -> Result<(Model, TrainOutcome)> {
    let vocab = Vocabulary::from_corpora(&[train_corpus]);
    let mut model = Model::new(
        variant,
        train_corpus.label_space.types(),
        &run.encoder,
        run.weights,
        vocab,
        pretrained,
        seed,
    )?;
    let mut cfg = run.train.clone();
    cfg.seed = seed;
    let outcome = train(&mut model, train_corpus, dev, &cfg, |_| {})?;
    Ok((model, outcome))
}

struct Point {
    fraction: f64,
    seed: u64,
    full: Corpus,
    partial: Vec<(Projection, Corpus)>,
}

fn points(spec: &ExperimentSpec, data: &ExperimentData) -> Result<Vec<Point>> {
    let n = data.pool.len();
    let mut out = Vec::new();
    for &seed in &spec.seeds {
        let pool = shuffled(&data.pool, seed);
        for &fraction in &spec.grid {
            let point = match spec.protocol {
                Protocol::KnowledgeIntegration => {
                    let (a, b) = (n / 3, 2 * n / 3);
                    let full_fold = slice(&pool, b, n);
                    let k = count(full_fold.len(), fraction);
                    Point {
                        fraction,
                        seed,
                        full: slice(&full_fold, 0, k),
                        partial: vec![
                            (Projection::Seg, projected(&slice(&pool, 0, a), Projection::Seg)?),
                            (Projection::Typ, projected(&slice(&pool, a, b), Projection::Typ)?),
                        ],
                    }
                }
                Protocol::PartialCurve => {
                    let nf = count(n, spec.full_fraction);
                    let np = count(n, fraction).min(n - nf);
                    Point {
                        fraction,
                        seed,
                        full: slice(&pool, 0, nf),
                        partial: vec![(spec.partial, projected(&slice(&pool, nf, nf + np), spec.partial)?)],
                    }
                }
                Protocol::DomainTransfer => {
                    let ood = data.out_of_domain.as_ref().ok_or_else(|| {
                        Error::Config("domain transfer needs an out-of-domain corpus".into())
                    })?;
                    let ood = shuffled(ood, seed);
                    let nf = count(n, spec.full_fraction);
                    let np = count(ood.len(), fraction);
                    Point {
                        fraction,
                        seed,
                        full: slice(&pool, 0, nf),
                        partial: vec![(spec.partial, projected(&slice(&ood, 0, np), spec.partial)?)],
                    }
                }
            };
            if point.full.is_empty() {
                return Err(Error::Config(format!(
                    "fraction {fraction} leaves no fully labeled training sentences"
                )));
            }
            out.push(point);
        }
    }
    Ok(out)
}

/// Runs every (seed, fraction) grid point for the modular variant of `run`
/// and for a Baseline trained on the same full labels only.
pub fn run_experiment(spec: &ExperimentSpec, data: &ExperimentData, run: &RunConfig) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    if !run.variant.is_modular() {
        return Err(Error::Config("experiments compare a modular variant against the baseline".into()));
    }
    for c in [&data.pool, &data.dev, &data.test] {
        if !c.is_fully_labeled() {
            return Err(Error::Config(format!("{} is not fully labeled", c.provenance)));
        }
    }
    let points = points(spec, data)?;
    // Outside knowledge integration the baseline's data does not depend on
    // the grid fraction, so it is trained once per seed.
    let shared_baseline = spec.protocol != Protocol::KnowledgeIntegration;
    let baseline_of = |i: usize| {
        if shared_baseline {
            i - i % spec.grid.len()
        } else {
            i
        }
    };
    let jobs: Vec<(usize, bool)> = (0..points.len())
        .flat_map(|i| [(i, true), (i, false)])
        .filter(|&(i, modular)| modular || baseline_of(i) == i)
        .collect();
    let trained = jobs
        .par_iter()
        .map(|&(i, modular)| {
            let p = &points[i];
            let (variant, train_corpus) = if modular {
                let mut parts = vec![&p.full];
                parts.extend(p.partial.iter().map(|(_, c)| c));
                (run.variant, Corpus::concat(&parts, "experiment train")?)
            } else {
                (ModelVariant::Baseline, p.full.clone())
            };
            let (model, outcome) = fit(variant, &train_corpus, &data.dev, run, None, p.seed)?;
            let f1 = evaluate(&model, &data.test, EvalMode::Full)?.f1;
            Ok(((i, modular), (f1, outcome.dev_curve())))
        })
        .collect::<Result<HashMap<_, _>>>()?;

    let mut rows = Vec::with_capacity(2 * points.len());
    for (i, p) in points.iter().enumerate() {
        let partial = |kind: Projection| -> usize {
            p.partial.iter().filter(|(k, _)| *k == kind).map(|(_, c)| c.len()).sum()
        };
        for (modular, key) in [(true, (i, true)), (false, (baseline_of(i), false))] {
            let (f1, curve) = &trained[&key];
            rows.push(ResultRow {
                fraction: p.fraction,
                seed: p.seed,
                system: if modular { run.variant } else { ModelVariant::Baseline }.to_string(),
                f1: *f1,
                sizes: if modular {
                    (p.full.len(), partial(Projection::Seg), partial(Projection::Typ))
                } else {
                    (p.full.len(), 0, 0)
                },
                dev_curve: curve.clone(),
            });
        }
    }
    Ok(rows)
}
