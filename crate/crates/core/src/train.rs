//! Mini-batch SGD with momentum, learning-rate decay, gradient clipping,
//! adversarial perturbation of token representations and early stopping
//! on development F1.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{AnnotatedSentence, Corpus};
use crate::encoder::{seeded, Mode};
use crate::error::{Error, Result};
use crate::eval::{span_f1, EvalMode};
use crate::labels::{compose, seg_bioes_to_bio2, seg_placeholder, FullLabel, Seg};
use crate::model::{Head, Model, Network, PartialPrediction, Targets};
use crate::numeric::{Graph, ParamId, ParamStore, Tensor, Var};

/// `η / (1 + e·ρ)`.
pub fn lr_at_epoch(eta: f64, rho: f64, epoch: usize) -> f64 {
    eta / (1.0 + epoch as f64 * rho)
}

/// Clamps every gradient entry into `[-bound, bound]`.
pub fn clip_gradients(store: &mut ParamStore, bound: f64) {
    for p in store.iter_mut() {
        for g in p.grad_mut().data_mut() {
            *g = g.clamp(-bound, bound);
        }
    }
}

#[derive(Clone, Debug)]
pub struct SgdMomentum {
    pub momentum: f64,
    velocity: Vec<Tensor>,
}

impl SgdMomentum {
    pub fn new(store: &ParamStore, momentum: f64) -> Self {
        SgdMomentum {
            momentum,
            velocity: store.iter().map(|(_, p)| Tensor::zeros(p.value().shape())).collect(),
        }
    }

    pub fn velocity(&self, id: ParamId) -> &Tensor {
        &self.velocity[id.index()]
    }

    /// `v ← μv + g; p ← p − lr·v`, then zeroes the gradients. Parameters in
    /// `frozen` are left untouched.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64, frozen: &[ParamId]) {
        for ((id, v), p) in store
            .iter()
            .map(|(id, _)| id)
            .collect::<Vec<_>>()
            .into_iter()
            .zip(self.velocity.iter_mut())
            .zip(store.iter_mut())
        {
            if frozen.contains(&id) {
                continue;
            }
            for (vi, gi) in v.data_mut().iter_mut().zip(p.grad().data()) {
                *vi = self.momentum * *vi + gi;
            }
            // Skipping all-zero velocities saves work on idle modules.
            if v.data().iter().any(|&x| x != 0.0) {
                for (pi, vi) in p.value_mut().data_mut().iter_mut().zip(v.data()) {
                    *pi -= lr * vi;
                }
            }
        }
        store.zero_grad();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStop {
    pub best_dev_f1: f64,
    pub best_epoch: usize,
    pub patience: usize,
    pub min_epochs: usize,
}

impl EarlyStop {
    pub fn new(patience: usize, min_epochs: usize) -> Self {
        EarlyStop {
            best_dev_f1: f64::NEG_INFINITY,
            best_epoch: 0,
            patience,
            min_epochs,
        }
    }

    /// Records `dev_f1` of `epoch` (1-based). Returns `true` in the first
    /// component when it is a new best.
    pub fn check(&mut self, epoch: usize, dev_f1: f64) -> (bool, StopDecision) {
        let improved = dev_f1 > self.best_dev_f1;
        if improved {
            self.best_dev_f1 = dev_f1;
            self.best_epoch = epoch;
        }
        let stop = epoch >= self.min_epochs && epoch - self.best_epoch >= self.patience;
        (improved, if stop { StopDecision::Stop } else { StopDecision::Continue })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PerturbationNorm {
    L2,
    Sign,
}

impl fmt::Display for PerturbationNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PerturbationNorm::L2 => "l2",
            PerturbationNorm::Sign => "sign",
        })
    }
}

impl FromStr for PerturbationNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(PerturbationNorm::L2),
            "sign" => Ok(PerturbationNorm::Sign),
            _ => Err(Error::Config(format!("unknown perturbation norm `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdversarialConfig {
    pub enabled: bool,
    pub epsilon: f64,
    pub norm: PerturbationNorm,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        AdversarialConfig {
            enabled: false,
            epsilon: 0.05,
            norm: PerturbationNorm::L2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub decay: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub clip: f64,
    pub patience: usize,
    pub min_epochs: usize,
    /// Hard cap on epochs, whatever early stopping says.
    pub max_epochs: usize,
    pub adversarial: AdversarialConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            decay: 0.05,
            momentum: 0.9,
            batch_size: 10,
            clip: 5.0,
            patience: 30,
            min_epochs: 120,
            max_epochs: 500,
            adversarial: AdversarialConfig::default(),
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            return bad(format!("decay {} must be nonnegative", self.decay));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} is outside [0, 1)", self.momentum));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch size and max_epochs must be positive".into());
        }
        if !(self.clip > 0.0) {
            return bad(format!("clip bound {} must be positive", self.clip));
        }
        if !(self.adversarial.epsilon >= 0.0 && self.adversarial.epsilon.is_finite()) {
            return bad(format!("epsilon {} must be finite and nonnegative", self.adversarial.epsilon));
        }
        Ok(())
    }
}

/// Result of building one batch objective.
pub struct BatchLoss {
    /// Scalar to back-propagate: clean loss plus, when enabled, the loss at
    /// the perturbed representations.
    pub root: Var,
    pub clean: Var,
    pub adversarial: Option<Var>,
    /// Perturbation added to each sentence's `e_t`, when one was applied.
    pub delta: Vec<Tensor>,
}

fn mean(g: &mut Graph, terms: &[Var]) -> Result<Var> {
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = g.add(total, t)?;
    }
    Ok(g.scale(total, 1.0 / terms.len() as f64))
}

/// Mean joint loss of a batch and, if `adversarial` is enabled, the mean
/// loss at `e_t + δ`, where δ follows the gradient of the clean loss with
/// respect to every `e_t` of the batch, scaled to length `epsilon` (L2) or
/// to `epsilon·sign` (sign mode), and enters the graph as a constant.
pub fn batch_loss(
    g: &mut Graph,
    net: &Network,
    store: &ParamStore,
    batch: &[(&AnnotatedSentence, &Targets)],
    adversarial: &AdversarialConfig,
    mode: &mut Mode<'_>,
) -> Result<BatchLoss> {
    if batch.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    let sentences: Vec<&AnnotatedSentence> = batch.iter().map(|(s, _)| *s).collect();
    let es = net.encoder().embed_batch(g, store, &sentences)?;
    let terms = es
        .iter()
        .zip(batch)
        .map(|(&e, (_, t))| net.sentence_loss(g, store, e, t, mode))
        .collect::<Result<Vec<_>>>()?;
    let clean = mean(g, &terms)?;
    let mut out = BatchLoss {
        root: clean,
        clean,
        adversarial: None,
        delta: Vec::new(),
    };
    if !adversarial.enabled {
        return Ok(out);
    }
    let grads = g.gradients(clean, &es)?;
    let norm = grads
        .iter()
        .flat_map(|t| t.data())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm == 0.0 {
        return Ok(out);
    }
    let eps = adversarial.epsilon;
    let delta: Vec<Tensor> = grads
        .into_iter()
        .map(|gr| {
            let data = gr
                .data()
                .iter()
                .map(|&x| match adversarial.norm {
                    PerturbationNorm::L2 => eps * x / norm,
                    PerturbationNorm::Sign if x == 0.0 => 0.0,
                    PerturbationNorm::Sign => eps * x.signum(),
                })
                .collect();
            Tensor::new(gr.shape().to_vec(), data).expect("same shape")
        })
        .collect();
    let mut adv_terms = Vec::with_capacity(batch.len());
    for ((&e, d), (_, t)) in es.iter().zip(&delta).zip(batch) {
        let d = g.constant(d.clone());
        let shifted = g.add(e, d)?;
        adv_terms.push(net.sentence_loss(g, store, shifted, t, mode)?);
    }
    let adv = mean(g, &adv_terms)?;
    out.root = g.add(clean, adv)?;
    out.adversarial = Some(adv);
    out.delta = delta;
    Ok(out)
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub dev_f1: f64,
}

impl fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{:.6}\t{:.6}", self.epoch, self.loss, self.dev_f1)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
}

impl TrainOutcome {
    pub fn dev_curve(&self) -> Vec<f64> {
        self.log.iter().map(|r| r.dev_f1).collect()
    }

    /// The log as tab-separated `epoch loss dev_f1` lines with a header.
    pub fn log_text(&self) -> String {
        let mut s = String::from("epoch\tloss\tdev_f1\n");
        for r in &self.log {
            s.push_str(&format!("{r}\n"));
        }
        s
    }
}

/// Span F1 of the model's full predictions on a fully labeled corpus.
pub fn evaluate(model: &Model, corpus: &Corpus, mode: EvalMode) -> Result<crate::eval::Prf1> {
    let gold = corpus.gold_labels()?;
    let pred = model.predict_corpus(corpus)?;
    span_f1(&gold, &pred, mode)
}

/// Scores the head that owns `mode`: the decision module for `Full`, the
/// segmentation or type module otherwise. A variant without that module is
/// a config error.
pub fn evaluate_head(model: &Model, corpus: &Corpus, mode: EvalMode) -> Result<crate::eval::Prf1> {
    let head = match mode {
        EvalMode::Full => return evaluate(model, corpus, mode),
        EvalMode::SegOnly => Head::Seg,
        EvalMode::TypeOnly => Head::Typ,
    };
    if !model.variant().is_modular() {
        return Err(Error::Config(format!(
            "the {} variant has no {} head",
            model.variant(),
            mode
        )));
    }
    let gold = corpus.gold_labels()?;
    let pred = corpus
        .sentences
        .par_iter()
        .map(|s| {
            Ok(match model.predict_partial(s, head)? {
                PartialPrediction::Seg(segs) => seg_bioes_to_bio2(&segs).into_iter().map(seg_placeholder).collect(),
                PartialPrediction::Typ(types) => types
                    .into_iter()
                    .map(|t| if t.is_outside() { FullLabel::outside() } else { compose(Seg::B, t).expect("typed") })
                    .collect(),
            })
        })
        .collect::<Result<Vec<Vec<FullLabel>>>>()?;
    span_f1(&gold, &pred, mode)
}

/// One optimizer update on `batch`; returns the batch objective before the
/// update. Parameters listed in `frozen` are not moved.
pub fn train_step(
    model: &mut Model,
    batch: &[(&AnnotatedSentence, &Targets)],
    config: &TrainConfig,
    opt: &mut SgdMomentum,
    lr: f64,
    frozen: &[ParamId],
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut g = Graph::new();
    let loss = batch_loss(&mut g, &model.net, &model.params, batch, &config.adversarial, &mut Mode::Train(rng))?;
    let value = g.value(loss.root).item();
    g.backward(loss.root, &mut model.params)?;
    drop(g);
    clip_gradients(&mut model.params, config.clip);
    opt.step(&mut model.params, lr, frozen);
    Ok(value)
}

/// Trains `model` in place and leaves it at the best development epoch.
/// `on_epoch` sees every log record as it is produced.
pub fn train(
    model: &mut Model,
    train_corpus: &Corpus,
    dev_corpus: &Corpus,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_corpus.is_empty() || dev_corpus.is_empty() {
        return Err(Error::Config("training and development corpora must be nonempty".into()));
    }
    if !dev_corpus.is_fully_labeled() {
        return Err(Error::Config("the development corpus must be fully labeled".into()));
    }
    let mut train_set = train_corpus.clone();
    model.vocab.index_corpus(&mut train_set);
    let scheme = train_set.label_space.scheme();
    let targets = train_set
        .sentences
        .iter()
        .map(|s| model.net.targets(s, scheme))
        .collect::<Result<Vec<_>>>()?;

    let frozen = model.frozen_params();
    let mut opt = SgdMomentum::new(&model.params, config.momentum);
    let mut stop = EarlyStop::new(config.patience, config.min_epochs);
    let mut rng = seeded(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best = model.params.clone();
    let mut log = Vec::new();
    model.params.zero_grad();

    for epoch in 1..=config.max_epochs {
        let lr = lr_at_epoch(config.lr, config.decay, epoch - 1);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&AnnotatedSentence, &Targets)> =
                chunk.iter().map(|&i| (&train_set.sentences[i], &targets[i])).collect();
            loss_sum += train_step(model, &batch, config, &mut opt, lr, &frozen, &mut rng)?;
            batches += 1;
        }
        let dev_f1 = evaluate(model, dev_corpus, EvalMode::Full)?.f1;
        let record = EpochRecord {
            epoch,
            loss: loss_sum / batches as f64,
            dev_f1,
        };
        on_epoch(&record);
        log.push(record);
        let (improved, decision) = stop.check(epoch, dev_f1);
        if improved {
            best = model.params.clone();
        }
        if decision == StopDecision::Stop {
            break;
        }
    }
    model.params = best;
    Ok(TrainOutcome {
        log,
        best_epoch: stop.best_epoch,
        best_dev_f1: stop.best_dev_f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic_corpus, Annotation, SynthSpec, Vocabulary};
    use crate::encoder::EncoderConfig;
    use crate::labels::{Scheme, Seg};
    use crate::model::{LossWeights, ModelVariant};

    #[test]
    fn learning_rate_schedule() {
        assert_eq!(lr_at_epoch(0.01, 0.05, 0), 0.01);
        assert!((lr_at_epoch(0.01, 0.05, 20) - 0.005).abs() < 1e-15);
        assert_eq!(lr_at_epoch(0.01, 0.0, 37), 0.01);
    }

    #[test]
    fn clipping() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::zeros(&[3])).unwrap();
        store.get_mut(id).grad_mut().data_mut().copy_from_slice(&[7.2, -0.3, -9.0]);
        clip_gradients(&mut store, 5.0);
        assert_eq!(store.get(id).grad().data(), &[5.0, -0.3, -5.0]);
    }

    fn one_weight(g: f64) -> (ParamStore, ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::scalar(1.0)).unwrap();
        store.get_mut(id).grad_mut().data_mut()[0] = g;
        (store, id)
    }

    #[test]
    fn plain_sgd_without_momentum() {
        let (mut store, id) = one_weight(2.0);
        let mut opt = SgdMomentum::new(&store, 0.0);
        opt.step(&mut store, 0.1, &[]);
        assert!((store.get(id).value().item() - 0.8).abs() < 1e-15);
        assert_eq!(store.get(id).grad().item(), 0.0);
    }

    #[test]
    fn momentum_accumulates() {
        let (mut store, id) = one_weight(2.0);
        let mut opt = SgdMomentum::new(&store, 0.9);
        opt.step(&mut store, 0.1, &[]);
        store.get_mut(id).grad_mut().data_mut()[0] = 2.0;
        opt.step(&mut store, 0.1, &[]);
        let expect = 1.0 - 0.1 * 2.0 * (1.0 + 1.9);
        assert!((store.get(id).value().item() - expect).abs() < 1e-15);

        // A zero gradient only decays the velocity.
        let before = store.get(id).value().item();
        let v = opt.velocity(id).item();
        opt.step(&mut store, 0.1, &[]);
        assert!((opt.velocity(id).item() - 0.9 * v).abs() < 1e-15);
        assert!((store.get(id).value().item() - (before - 0.1 * 0.9 * v)).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_and_zero_velocity_leave_bits() {
        let (mut store, id) = one_weight(0.0);
        let mut opt = SgdMomentum::new(&store, 0.9);
        opt.step(&mut store, 0.1, &[]);
        assert_eq!(store.get(id).value().item().to_bits(), 1.0f64.to_bits());
        let (mut store, id) = one_weight(3.0);
        let mut opt = SgdMomentum::new(&store, 0.9);
        opt.step(&mut store, 0.1, &[id]);
        assert_eq!(store.get(id).value().item(), 1.0);
    }

    #[test]
    fn early_stopping_rules() {
        let mut s = EarlyStop::new(30, 120);
        for e in 1..=119 {
            assert_eq!(s.check(e, e as f64).1, StopDecision::Continue);
        }
        for e in 120..149 {
            assert_eq!(s.check(e, 0.0).1, StopDecision::Continue);
        }
        assert_eq!(s.check(149, 0.0).1, StopDecision::Stop);

        let mut s = EarlyStop::new(30, 120);
        for e in 1..120 {
            assert_eq!(s.check(e, 0.5).1, StopDecision::Continue);
        }
        assert_eq!(s.best_epoch, 1);
        assert_eq!(s.check(120, 0.5).1, StopDecision::Stop);

        let mut s = EarlyStop::new(30, 120);
        for e in 1..500 {
            assert_eq!(s.check(e, e as f64).1, StopDecision::Continue);
        }
    }

    fn tiny_model(variant: ModelVariant, corpus: &Corpus) -> Model {
        let cfg = EncoderConfig {
            char_embed_dim: 4,
            char_hidden: 4,
            word_embed_dim: 8,
            word_hidden: 8,
            dropout: 0.0,
            ..EncoderConfig::default()
        };
        Model::new(
            variant,
            corpus.label_space.types(),
            &cfg,
            LossWeights::default(),
            Vocabulary::from_corpora(&[corpus]),
            None,
            3,
        )
        .unwrap()
    }

    fn small_corpus(n: usize, seed: u64) -> Corpus {
        let spec = SynthSpec {
            sentences: n,
            sentence_len: (4, 6),
            ..SynthSpec::default()
        };
        generate_synthetic_corpus(&spec, seed).unwrap()
    }

    fn prepared(m: &Model, c: &Corpus) -> (Corpus, Vec<Targets>) {
        let mut c = c.clone();
        m.vocab.index_corpus(&mut c);
        let t = c.sentences.iter().map(|s| m.net.targets(s, Scheme::Bio2).unwrap()).collect();
        (c, t)
    }

    #[test]
    fn fixed_batch_loss_descends_for_every_variant() {
        let corpus = small_corpus(10, 1);
        for v in ModelVariant::ALL {
            let mut m = tiny_model(v, &corpus);
            let (c, t) = prepared(&m, &corpus);
            let batch: Vec<_> = c.sentences.iter().zip(&t).collect();
            let mut opt = SgdMomentum::new(&m.params, 0.9);
            let mut last = f64::INFINITY;
            for _ in 0..6 {
                let mut g = Graph::new();
                let l = batch_loss(&mut g, &m.net, &m.params, &batch, &AdversarialConfig::default(), &mut Mode::Eval)
                    .unwrap();
                let value = g.value(l.root).item();
                assert!(value < last, "{v}: {value} !< {last}");
                last = value;
                g.backward(l.root, &mut m.params).unwrap();
                clip_gradients(&mut m.params, 5.0);
                opt.step(&mut m.params, 0.001, &[]);
            }
        }
    }

    #[test]
    fn adversarial_perturbation_contract() {
        let corpus = small_corpus(4, 2);
        let m = tiny_model(ModelVariant::TIg, &corpus);
        let (c, t) = prepared(&m, &corpus);
        let batch: Vec<_> = c.sentences.iter().zip(&t).collect();
        let run = |eps: f64| {
            let mut g = Graph::new();
            let cfg = AdversarialConfig {
                enabled: true,
                epsilon: eps,
                norm: PerturbationNorm::L2,
            };
            let l = batch_loss(&mut g, &m.net, &m.params, &batch, &cfg, &mut Mode::Eval).unwrap();
            let clean = g.value(l.clean).item();
            let adv = g.value(l.adversarial.unwrap()).item();
            let norm = l.delta.iter().flat_map(|d| d.data()).map(|x| x * x).sum::<f64>().sqrt();
            (clean, adv, norm)
        };
        let (clean, adv, norm) = run(0.0);
        assert_eq!(clean, adv);
        assert_eq!(norm, 0.0);
        let (clean, adv, norm) = run(1e-4);
        assert!(adv >= clean);
        assert!((norm - 1e-4).abs() < 1e-12);
        let (_, _, norm) = run(0.05);
        assert!((norm - 0.05).abs() < 1e-12);
    }

    #[test]
    fn seg_only_batch_touches_only_seg_path() {
        let corpus = small_corpus(10, 3);
        let mut m = tiny_model(ModelVariant::TIg, &corpus);
        let mut c = corpus.clone();
        for s in &mut c.sentences {
            let segs: Vec<Seg> = crate::labels::seg_projection(s.full_labels().unwrap());
            s.annotation = Annotation::SegOnly(segs);
        }
        let before = m.params.clone();
        let dev = small_corpus(3, 4);
        let cfg = TrainConfig {
            max_epochs: 1,
            ..TrainConfig::default()
        };
        train(&mut m, &c, &dev, &cfg, |_| {}).unwrap();
        let mut silent = m.net.module_params(None);
        silent.extend(m.net.module_params(Some(crate::model::Head::Typ)));
        silent.extend(m.net.gate_params());
        for id in silent {
            assert_eq!(m.params.get(id).value(), before.get(id).value());
        }
    }

    #[test]
    fn dev_must_be_fully_labeled() {
        let corpus = small_corpus(5, 5);
        let mut m = tiny_model(ModelVariant::T, &corpus);
        let mut dev = corpus.clone();
        dev.sentences[0].annotation = Annotation::Unlabeled;
        assert!(matches!(
            train(&mut m, &corpus, &dev, &TrainConfig::default(), |_| {}),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn training_is_deterministic_and_logged() {
        let corpus = small_corpus(20, 6);
        let dev = small_corpus(5, 7);
        let cfg = TrainConfig {
            max_epochs: 3,
            ..TrainConfig::default()
        };
        let run = || {
            let mut m = tiny_model(ModelVariant::Baseline, &corpus);
            let mut seen = 0;
            let out = train(&mut m, &corpus, &dev, &cfg, |_| seen += 1).unwrap();
            assert_eq!(out.log.len(), seen);
            (out.log, m.to_archive().to_bytes())
        };
        let (a, ca) = run();
        let (b, cb) = run();
        assert_eq!(a.len(), 3);
        assert_eq!(a, b);
        assert_eq!(ca, cb);
    }

    #[test]
    fn head_evaluation_needs_the_head() {
        let corpus = small_corpus(6, 8);
        let base = tiny_model(ModelVariant::Baseline, &corpus);
        assert!(matches!(evaluate_head(&base, &corpus, EvalMode::SegOnly), Err(Error::Config(_))));
        let tig = tiny_model(ModelVariant::TIg, &corpus);
        for mode in [EvalMode::Full, EvalMode::SegOnly, EvalMode::TypeOnly] {
            let r = evaluate_head(&tig, &corpus, mode).unwrap();
            assert!((0.0..=1.0).contains(&r.f1));
        }
        let gold_spans: usize = corpus
            .gold_labels()
            .unwrap()
            .iter()
            .map(|g| crate::eval::extract_spans(g).len())
            .sum();
        let r = evaluate_head(&tig, &corpus, EvalMode::SegOnly).unwrap();
        assert_eq!(r.tp + r.fn_, gold_spans);
    }
}
