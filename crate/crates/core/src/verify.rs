//! Self-contained oracle suite: brute-force CRF equivalence, finite-difference
//! gradient checks, label round-trips, partial-label masking and gate
//! saturation. Every check is deterministic and finishes in seconds.

use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::crf::{brute_force_argmax, brute_force_log_partition, log_partition, viterbi, CrfPotentials};
use crate::data::{AnnotatedSentence, Annotation, Token, Vocabulary};
use crate::encoder::{seeded, EncoderConfig, Mode};
use crate::error::Result;
use crate::eval::{extract_spans, render_spans, Span};
use crate::labels::{
    bio2_to_bioes, bioes_to_bio2, compose, decompose, seg_projection, type_projection, FullLabel, LabelSpace, Scheme,
    TypeLabel,
};
use crate::model::{Head, LossWeights, Model, ModelVariant};
use crate::numeric::{grad_check, ParamId, Tensor};
use crate::train::{train_step, SgdMomentum, TrainConfig};

/// Outcome of one named property.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, failures: Vec<String>, ok_detail: String) -> Self {
        let passed = failures.is_empty();
        Check {
            name: name.to_string(),
            passed,
            detail: if passed { ok_detail } else { failures.join("; ") },
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag}\t{}\t{}", self.name, self.detail)
    }
}

#[derive(Clone, Debug, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.failures().count();
        write!(f, "{} checks, {failed} failed", self.checks.len())
    }
}

/// Random potentials with `L ≤ max_len` and `K ≤ max_k`. Every other
/// instance uses integer values in {-1, 0, 1} so that ties actually occur.
pub fn random_potentials(rng: &mut ChaCha8Rng, max_len: usize, max_k: usize) -> CrfPotentials {
    let len = rng.gen_range(1..=max_len);
    let k = rng.gen_range(1..=max_k);
    let coarse = rng.gen_bool(0.5);
    let mut draw = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| {
                if coarse {
                    rng.gen_range(-1i32..=1) as f64
                } else {
                    rng.gen_range(-2.0..2.0)
                }
            })
            .collect()
    };
    let em = Tensor::new(vec![len, k], draw(len * k)).expect("shape");
    let tr = Tensor::new(vec![k + 2, k + 2], draw((k + 2) * (k + 2))).expect("shape");
    CrfPotentials::new(em, tr).expect("consistent shapes")
}

/// Forward-algorithm partition and `decode` against exhaustive enumeration
/// on `instances` random problems. `decode` is a parameter so that the
/// check itself can be tested against a faulty decoder.
pub fn check_crf_oracle(
    instances: usize,
    seed: u64,
    tol: f64,
    decode: impl Fn(&CrfPotentials) -> (Vec<usize>, f64),
) -> Result<Check> {
    let mut rng = seeded(seed);
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let p = random_potentials(&mut rng, 6, 4);
        let z = log_partition(&p);
        let zb = brute_force_log_partition(&p)?;
        worst = worst.max((z - zb).abs());
        if (z - zb).abs() > tol {
            failures.push(format!("instance {i}: log Z {z} vs {zb}"));
        }
        let (path, score) = decode(&p);
        let (best, best_score) = brute_force_argmax(&p)?;
        if (score - best_score).abs() > tol || path != best {
            failures.push(format!("instance {i}: decoded {path:?} ({score}) vs {best:?} ({best_score})"));
        }
    }
    Ok(Check::new(
        "crf-oracle",
        failures,
        format!("{instances} instances, max |Δ log Z| = {worst:.1e}"),
    ))
}

/// A random valid BIO2 sequence over `types`.
pub fn random_bio2(rng: &mut ChaCha8Rng, len: usize, types: &[String]) -> Vec<FullLabel> {
    let mut spans = Vec::new();
    let mut t = 0;
    while t < len {
        if rng.gen_bool(0.4) {
            let end = (t + rng.gen_range(0..3)).min(len - 1);
            let typ = TypeLabel::new(&types[rng.gen_range(0..types.len())]);
            spans.push(Span { start: t, end, label: typ });
            t = end + 1;
        } else {
            t += 1;
        }
    }
    render_spans(&spans, len)
}

pub fn check_label_algebra(sequences: usize, seed: u64) -> Result<Check> {
    let types: Vec<String> = ["pos", "neg", "neu", "misc"].iter().map(|s| s.to_string()).collect();
    let mut rng = seeded(seed);
    let mut failures = Vec::new();
    for i in 0..sequences {
        let len = rng.gen_range(1..=12);
        let seq = random_bio2(&mut rng, len, &types);
        for l in &seq {
            let (s, t) = decompose(l);
            if compose(s, t)? != *l {
                failures.push(format!("sequence {i}: compose(decompose({l})) differs"));
            }
        }
        let bioes = bio2_to_bioes(&seq)?;
        if bioes_to_bio2(&bioes) != seq {
            failures.push(format!("sequence {i}: BIOES round trip differs"));
        }
        if extract_spans(&bioes) != extract_spans(&seq) {
            failures.push(format!("sequence {i}: BIOES changes the spans"));
        }
        if seg_projection(&seq).len() != len || type_projection(&seq).len() != len {
            failures.push(format!("sequence {i}: projection length"));
        }
    }
    let n = LabelSpace::new(Scheme::Bioes, &types)?.num_full();
    if n != 17 {
        failures.push(format!("BIOES with 4 types has {n} labels, expected 17"));
    }
    Ok(Check::new(
        "label-algebra",
        failures,
        format!("{sequences} sequences, BIOES x 4 types = {n} labels"),
    ))
}

const WORDS: [&str; 3] = ["Green", "Book", "rocks"];

fn tiny_encoder() -> EncoderConfig {
    EncoderConfig {
        char_embed_dim: 2,
        char_hidden: 2,
        word_embed_dim: 3,
        word_hidden: 3,
        ..EncoderConfig::default()
    }
}

/// A small model with parameters drawn from U(-0.5, 0.5), so that no
/// gradient is trivially zero.
pub fn probe_model(variant: ModelVariant, seed: u64) -> Result<Model> {
    let mut vocab = Vocabulary::new();
    for w in WORDS {
        vocab.add_word(w);
    }
    let types = vec!["pos".to_string(), "neg".to_string()];
    let mut m = Model::new(variant, &types, &tiny_encoder(), LossWeights::default(), vocab, None, seed)?;
    let mut rng = seeded(seed ^ 0x5eed);
    for p in m.params.iter_mut() {
        for v in p.value_mut().data_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
    }
    Ok(m)
}

/// The three-token probe sentence, indexed against `model`.
pub fn probe_sentence(model: &Model, annotation: Annotation) -> Result<AnnotatedSentence> {
    let mut s = AnnotatedSentence::new(0, WORDS.iter().map(|w| Token::new(*w)).collect(), annotation)?;
    model.vocab.index_sentence(&mut s);
    Ok(s)
}

fn full_probe_labels() -> Vec<FullLabel> {
    ["B-pos", "I-pos", "O"].iter().map(|l| l.parse().expect("valid label")).collect()
}

pub fn check_gradients(step: f64, tol: f64) -> Result<Check> {
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for v in ModelVariant::ALL {
        let m = probe_model(v, 11)?;
        let s = probe_sentence(&m, Annotation::Full(full_probe_labels()))?;
        let t = m.net.targets(&s, Scheme::Bio2)?;
        let report = grad_check(
            &m.params,
            |g, store| {
                let e = m.net.encoder().embed_batch(g, store, &[&s])?[0];
                m.net.sentence_loss(g, store, e, &t, &mut Mode::Eval)
            },
            step,
            tol,
        )?;
        worst = worst.max(report.max_rel_error());
        for f in report.failures() {
            failures.push(format!("{v}/{}: rel {:.2e}", f.name, f.max_rel_error));
        }
    }
    Ok(Check::new(
        "gradients",
        failures,
        format!("5 variants, max relative error {worst:.1e}"),
    ))
}

/// Parameters one update on partial labels of `kept` must leave untouched.
fn silent_params(m: &Model, kept: Head) -> Vec<ParamId> {
    let other = match kept {
        Head::Seg => Head::Typ,
        Head::Typ => Head::Seg,
    };
    let mut ids = m.net.module_params(None);
    ids.extend(m.net.module_params(Some(other)));
    ids.extend(m.net.gate_params());
    ids
}

/// One SGD update on a SegOnly (TypeOnly) sentence for every modular
/// variant; the untouched parameters must be bit-identical afterwards.
pub fn check_masking() -> Result<Check> {
    let mut failures = Vec::new();
    let full = full_probe_labels();
    for v in ModelVariant::ALL.into_iter().filter(|v| v.is_modular()) {
        for (head, annotation) in [
            (Head::Seg, Annotation::SegOnly(seg_projection(&full))),
            (Head::Typ, Annotation::TypeOnly(type_projection(&full))),
        ] {
            let mut m = probe_model(v, 3)?;
            let s = probe_sentence(&m, annotation)?;
            let t = m.net.targets(&s, Scheme::Bio2)?;
            let before = m.params.clone();
            let mut config = TrainConfig::default();
            config.adversarial.enabled = true;
            let mut opt = SgdMomentum::new(&m.params, config.momentum);
            let frozen = m.frozen_params();
            let mut rng = seeded(1);
            train_step(&mut m, &[(&s, &t)], &config, &mut opt, 0.5, &frozen, &mut rng)?;
            for id in silent_params(&m, head) {
                let (a, b) = (before.get(id).value().data(), m.params.get(id).value().data());
                if a.iter().zip(b).any(|(x, y)| x.to_bits() != y.to_bits()) {
                    failures.push(format!("{v}: {head:?}-only update moved {}", m.params.get(id).name()));
                }
            }
            let moved = m.net.module_params(Some(head)).into_iter().any(|id| {
                before.get(id).value() != m.params.get(id).value()
            });
            if !moved {
                failures.push(format!("{v}: {head:?}-only update did not train its own module"));
            }
        }
    }
    Ok(Check::new(
        "masking",
        failures,
        "partial updates leave other heads, gates and decision bit-identical".into(),
    ))
}

/// TIg with gate biases at `bias` against TI with the same shared values;
/// returns the largest difference of the decision potentials.
pub fn gate_saturation_gap(bias: f64) -> Result<f64> {
    let ti = probe_model(ModelVariant::TI, 7)?;
    let mut tig = probe_model(ModelVariant::TIg, 7)?;
    for (_, p) in ti.params.iter() {
        if let Some(id) = tig.params.id(p.name()) {
            tig.params.set_value(id, p.value().clone())?;
        }
    }
    let (b_seg, b_typ) = tig.net.gate_biases().expect("gated variant");
    let space = tig.net.space();
    let (ks, kt) = (space.num_seg(), space.num_types());
    tig.params.set_value(b_seg, Tensor::full(&[1, ks], bias))?;
    tig.params.set_value(b_typ, Tensor::full(&[1, kt], bias))?;
    let s = probe_sentence(&ti, Annotation::Unlabeled)?;
    let a = ti.net.decision_potentials(&ti.params, &s)?;
    let b = tig.net.decision_potentials(&tig.params, &s)?;
    Ok(a.max_abs_diff(&b))
}

pub fn check_gate_saturation(tol: f64) -> Result<Check> {
    let gap = gate_saturation_gap(30.0)?;
    let failures = if gap <= tol {
        Vec::new()
    } else {
        vec![format!("open gates differ from plain infusion by {gap:.2e}")]
    };
    Ok(Check::new("gate-saturation", failures, format!("max |Δ| = {gap:.1e}")))
}

/// Runs every check.
pub fn run_all() -> Result<VerifyReport> {
    let checks = vec![
        check_crf_oracle(200, 1, 1e-10, viterbi)?,
        check_gradients(1e-5, 1e-4)?,
        check_label_algebra(1000, 2)?,
        check_masking()?,
        check_gate_saturation(1e-9)?,
    ];
    Ok(VerifyReport { checks })
}
