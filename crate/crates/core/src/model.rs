//! The five architecture variants and their joint loss.
//!
//! Every variant has a decision module that predicts full BIOES labels.
//! Modular variants add a segmentation module and a type module, each with
//! its own BiLSTM over the shared `e_t`, its own emission affine and its own
//! CRF. The infusion variants feed the sub-module emissions into the decision
//! module's emission layer, optionally through sigmoid gates computed from
//! the decision module's hidden state.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::crf::{argmax_rows, token_nll, viterbi, CrfGraph, CrfPotentials};
use crate::data::{AnnotatedSentence, Annotation, Corpus, EmbeddingTable, Vocabulary};
use crate::encoder::{encode_private, seeded, xavier, BiLstmParams, Encoder, EncoderConfig, Mode};
use crate::error::{Error, Result};
use crate::labels::{
    bio2_to_bioes, bioes_to_bio2, seg_bio2_to_bioes, seg_projection, type_projection, FullLabel,
    LabelSpace, Scheme, Seg, TypeLabel,
};
use crate::numeric::{Archive, Graph, ParamId, ParamStore, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelVariant {
    Baseline,
    T,
    TI,
    TIg,
    TIgNoCrf,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 5] = [
        ModelVariant::Baseline,
        ModelVariant::T,
        ModelVariant::TI,
        ModelVariant::TIg,
        ModelVariant::TIgNoCrf,
    ];

    pub fn is_modular(self) -> bool {
        self != ModelVariant::Baseline
    }

    pub fn uses_crf(self) -> bool {
        self != ModelVariant::TIgNoCrf
    }

    pub fn infuses(self) -> bool {
        matches!(self, ModelVariant::TI | ModelVariant::TIg | ModelVariant::TIgNoCrf)
    }

    pub fn gated(self) -> bool {
        matches!(self, ModelVariant::TIg | ModelVariant::TIgNoCrf)
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelVariant::Baseline => "baseline",
            ModelVariant::T => "t",
            ModelVariant::TI => "ti",
            ModelVariant::TIg => "tig",
            ModelVariant::TIgNoCrf => "tig-nocrf",
        })
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "baseline" | "lstm-crf" => Ok(ModelVariant::Baseline),
            "t" | "lstm-crf-t" => Ok(ModelVariant::T),
            "ti" | "lstm-crf-ti" => Ok(ModelVariant::TI),
            "tig" | "ti(g)" | "lstm-crf-ti(g)" => Ok(ModelVariant::TIg),
            "tig-nocrf" | "tignocrf" | "lstm-ti(g)" => Ok(ModelVariant::TIgNoCrf),
            _ => Err(Error::Config(format!("unknown model variant `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 1.0, beta: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and nonnegative, got {w}")));
            }
        }
        Ok(())
    }
}

/// Sub-task head of a modular model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    Seg,
    Typ,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PartialPrediction {
    Seg(Vec<Seg>),
    Typ(Vec<TypeLabel>),
}

#[derive(Clone, Copy, Debug)]
struct Affine {
    w: ParamId,
    b: ParamId,
}

impl Affine {
    fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Result<Self> {
        Ok(Affine {
            w: store.add(format!("{name}.w"), xavier(rng, fan_in, fan_out))?,
            b: store.add(format!("{name}.b"), Tensor::zeros(&[1, fan_out]))?,
        })
    }

    fn apply(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    }
}

/// Private stack of one module: BiLSTM, emission affine and transitions.
#[derive(Clone, Debug)]
struct Module {
    lstm: BiLstmParams,
    emit: Affine,
    transitions: Option<ParamId>,
}

impl Module {
    fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.lstm.param_ids();
        ids.extend([self.emit.w, self.emit.b]);
        ids.extend(self.transitions);
        ids
    }
}

/// Gold label indices of one sentence, per head. Absent projections are
/// simply absent.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Targets {
    pub decision: Option<Vec<usize>>,
    pub seg: Option<Vec<usize>>,
    pub typ: Option<Vec<usize>>,
}

/// Emission matrices computed by one forward pass.
#[derive(Clone, Copy, Debug, Default)]
pub struct HeadOutputs {
    pub decision: Option<Var>,
    pub seg: Option<Var>,
    pub typ: Option<Var>,
}

/// Which emissions a forward pass must produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Needs {
    pub decision: bool,
    pub seg: bool,
    pub typ: bool,
}

impl Needs {
    pub const ALL: Needs = Needs {
        decision: true,
        seg: true,
        typ: true,
    };
    pub const DECISION: Needs = Needs {
        decision: true,
        seg: false,
        typ: false,
    };
}

/// Architecture: parameter handles and label spaces, without values.
#[derive(Clone, Debug)]
pub struct Network {
    variant: ModelVariant,
    space: LabelSpace,
    weights: LossWeights,
    encoder: Encoder,
    decision: Module,
    seg: Option<Module>,
    typ: Option<Module>,
    gate_seg: Option<Affine>,
    gate_typ: Option<Affine>,
}

impl Network {
    /// Registers all parameters in `store`. `types` defines the label
    /// space; the network itself always works in BIOES.
    pub fn new(
        variant: ModelVariant,
        types: &[String],
        encoder_config: &EncoderConfig,
        weights: LossWeights,
        vocab: &Vocabulary,
        pretrained: Option<&EmbeddingTable>,
        store: &mut ParamStore,
        seed: u64,
    ) -> Result<Self> {
        weights.validate()?;
        let space = LabelSpace::new(Scheme::Bioes, types)?;
        let mut rng = seeded(seed);
        let encoder = Encoder::new(encoder_config, vocab, pretrained, store, &mut rng)?;
        let d_e = encoder_config.token_dim();
        let modular = variant.is_modular();
        let hidden = encoder_config.private_hidden(modular);
        let (k, k_seg, k_typ) = (space.num_full(), space.num_seg(), space.num_types());

        let transitions = |store: &mut ParamStore, name: &str, k: usize| -> Result<Option<ParamId>> {
            if variant.uses_crf() {
                Ok(Some(store.add(format!("{name}.transitions"), Tensor::zeros(&[k + 2, k + 2]))?))
            } else {
                Ok(None)
            }
        };

        let dec_lstm = BiLstmParams::new(store, "decision.lstm", d_e, hidden, &mut rng)?;
        let mut sub = |store: &mut ParamStore, name: &str, k: usize| -> Result<Module> {
            let lstm = BiLstmParams::new(store, &format!("{name}.lstm"), d_e, hidden, &mut rng)?;
            let emit = Affine::new(store, &format!("{name}.emit"), 2 * hidden, k, &mut rng)?;
            let transitions = transitions(store, name, k)?;
            Ok(Module {
                lstm,
                emit,
                transitions,
            })
        };
        let (seg, typ) = if modular {
            (Some(sub(store, "seg", k_seg)?), Some(sub(store, "typ", k_typ)?))
        } else {
            (None, None)
        };
        let dec_in = if variant.infuses() {
            2 * hidden + k_seg + k_typ
        } else {
            2 * hidden
        };
        let dec_emit = Affine::new(store, "decision.emit", dec_in, k, &mut rng)?;
        let decision = Module {
            lstm: dec_lstm,
            emit: dec_emit,
            transitions: transitions(store, "decision", k)?,
        };
        let (gate_seg, gate_typ) = if variant.gated() {
            (
                Some(Affine::new(store, "gate.seg", 2 * hidden, k_seg, &mut rng)?),
                Some(Affine::new(store, "gate.typ", 2 * hidden, k_typ, &mut rng)?),
            )
        } else {
            (None, None)
        };
        Ok(Network {
            variant,
            space,
            weights,
            encoder,
            decision,
            seg,
            typ,
            gate_seg,
            gate_typ,
        })
    }

    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    /// The BIOES space the network predicts in.
    pub fn space(&self) -> &LabelSpace {
        &self.space
    }

    pub fn weights(&self) -> LossWeights {
        self.weights
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    /// Bias ids of the two gates, if the variant has them.
    pub fn gate_biases(&self) -> Option<(ParamId, ParamId)> {
        Some((self.gate_seg?.b, self.gate_typ?.b))
    }

    /// Parameters of one module's private path (BiLSTM, emission affine,
    /// transitions).
    pub fn module_params(&self, head: Option<Head>) -> Vec<ParamId> {
        match head {
            None => self.decision.param_ids(),
            Some(Head::Seg) => self.seg.as_ref().map(Module::param_ids).unwrap_or_default(),
            Some(Head::Typ) => self.typ.as_ref().map(Module::param_ids).unwrap_or_default(),
        }
    }

    pub fn gate_params(&self) -> Vec<ParamId> {
        [self.gate_seg, self.gate_typ]
            .into_iter()
            .flatten()
            .flat_map(|a| [a.w, a.b])
            .collect()
    }

    fn module(&self, head: Head) -> Result<&Module> {
        let m = match head {
            Head::Seg => self.seg.as_ref(),
            Head::Typ => self.typ.as_ref(),
        };
        m.ok_or_else(|| Error::Config(format!("the {} variant has no {head:?} module", self.variant)))
    }

    /// Converts a sentence's annotation into per-head gold indices. Labels
    /// are read in `scheme` and converted to BIOES.
    pub fn targets(&self, sentence: &AnnotatedSentence, scheme: Scheme) -> Result<Targets> {
        let bad = |what: &str| Error::Validation(format!("sentence {}: {what}", sentence.id));
        let seg_idx = |segs: &[Seg]| -> Result<Vec<usize>> {
            segs.iter()
                .map(|&s| self.space.seg_index(s).ok_or_else(|| bad("segmentation tag outside BIOES")))
                .collect()
        };
        let typ_idx = |typs: &[TypeLabel]| -> Result<Vec<usize>> {
            typs.iter()
                .map(|t| self.space.type_index(t).ok_or_else(|| bad(&format!("unknown type `{t}`"))))
                .collect()
        };
        match &sentence.annotation {
            Annotation::Unlabeled => Err(Error::Usage(format!(
                "sentence {} has no labels to train on",
                sentence.id
            ))),
            Annotation::Full(labels) => {
                let labels = match scheme {
                    Scheme::Bio2 => bio2_to_bioes(labels)?,
                    Scheme::Bioes => labels.clone(),
                };
                let decision = labels
                    .iter()
                    .map(|l| self.space.full_index(l).ok_or_else(|| bad(&format!("label `{l}` not in space"))))
                    .collect::<Result<Vec<_>>>()?;
                let (seg, typ) = if self.variant.is_modular() {
                    (
                        Some(seg_idx(&seg_projection(&labels))?),
                        Some(typ_idx(&type_projection(&labels))?),
                    )
                } else {
                    (None, None)
                };
                Ok(Targets {
                    decision: Some(decision),
                    seg,
                    typ,
                })
            }
            Annotation::SegOnly(segs) => {
                self.module(Head::Seg)?;
                let segs = match scheme {
                    Scheme::Bio2 => seg_bio2_to_bioes(segs)?,
                    Scheme::Bioes => segs.clone(),
                };
                Ok(Targets {
                    seg: Some(seg_idx(&segs)?),
                    ..Targets::default()
                })
            }
            Annotation::TypeOnly(typs) => {
                self.module(Head::Typ)?;
                Ok(Targets {
                    typ: Some(typ_idx(typs)?),
                    ..Targets::default()
                })
            }
        }
    }

    /// Emission matrices for the requested heads, from `e` (`[L, d_e]`,
    /// before dropout).
    pub fn forward_heads(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        e: Var,
        needs: Needs,
        mode: &mut Mode<'_>,
    ) -> Result<HeadOutputs> {
        let rate = self.encoder.config.dropout;
        let infuse = needs.decision && self.variant.infuses();
        let mut out = HeadOutputs::default();
        if needs.seg || infuse {
            let m = self.module(Head::Seg)?;
            let h = encode_private(g, store, &m.lstm, e, rate, mode)?;
            out.seg = Some(m.emit.apply(g, store, h)?);
        }
        if needs.typ || infuse {
            let m = self.module(Head::Typ)?;
            let h = encode_private(g, store, &m.lstm, e, rate, mode)?;
            out.typ = Some(m.emit.apply(g, store, h)?);
        }
        if needs.decision {
            let h = encode_private(g, store, &self.decision.lstm, e, rate, mode)?;
            let input = if infuse {
                let (mut i_seg, mut i_typ) = (out.seg.expect("computed"), out.typ.expect("computed"));
                if let (Some(gs), Some(gt)) = (&self.gate_seg, &self.gate_typ) {
                    let a = gs.apply(g, store, h)?;
                    let a = g.sigmoid(a);
                    i_seg = g.hadamard(a, i_seg)?;
                    let b = gt.apply(g, store, h)?;
                    let b = g.sigmoid(b);
                    i_typ = g.hadamard(b, i_typ)?;
                }
                g.concat(&[h, i_seg, i_typ], 1)?
            } else {
                h
            };
            out.decision = Some(self.decision.emit.apply(g, store, input)?);
        }
        Ok(out)
    }

    fn head_nll(&self, g: &mut Graph, store: &ParamStore, m: &Module, em: Var, gold: &[usize]) -> Result<Var> {
        match m.transitions {
            Some(t) => {
                let t = g.param(store, t);
                CrfGraph::new(g, em, t)?.nll(g, gold)
            }
            None => token_nll(g, em, gold),
        }
    }

    /// Per-sentence joint loss from `e`: the decision NLL plus the weighted
    /// sub-task NLLs for full labels; only the available sub-task's weighted
    /// NLL for partial labels.
    pub fn sentence_loss(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        e: Var,
        targets: &Targets,
        mode: &mut Mode<'_>,
    ) -> Result<Var> {
        let needs = Needs {
            decision: targets.decision.is_some(),
            seg: targets.seg.is_some(),
            typ: targets.typ.is_some(),
        };
        if needs == (Needs { decision: false, seg: false, typ: false }) {
            return Err(Error::Usage("sentence has no targets".into()));
        }
        let out = self.forward_heads(g, store, e, needs, mode)?;
        self.joint_loss(g, store, &out, targets)
    }

    /// Combines head NLLs for the targets that are present.
    pub fn joint_loss(&self, g: &mut Graph, store: &ParamStore, out: &HeadOutputs, targets: &Targets) -> Result<Var> {
        let mut terms = Vec::new();
        if let Some(gold) = &targets.decision {
            let em = out.decision.ok_or_else(|| Error::Usage("decision emissions missing".into()))?;
            terms.push(self.head_nll(g, store, &self.decision, em, gold)?);
        }
        for (head, gold, em, w) in [
            (Head::Seg, &targets.seg, out.seg, self.weights.alpha),
            (Head::Typ, &targets.typ, out.typ, self.weights.beta),
        ] {
            if let Some(gold) = gold {
                let m = self.module(head)?;
                let em = em.ok_or_else(|| Error::Usage(format!("{head:?} emissions missing")))?;
                let nll = self.head_nll(g, store, m, em, gold)?;
                terms.push(g.scale(nll, w));
            }
        }
        let mut total = terms[0];
        for &t in &terms[1..] {
            total = g.add(total, t)?;
        }
        Ok(total)
    }

    fn decode(&self, store: &ParamStore, m: &Module, em: &Tensor) -> Result<Vec<usize>> {
        Ok(match m.transitions {
            Some(t) => viterbi(&CrfPotentials::new(em.clone(), store.get(t).value().clone())?).0,
            None => argmax_rows(em),
        })
    }

    /// Decision emissions of one sentence in evaluation mode.
    pub fn decision_potentials(&self, store: &ParamStore, sentence: &AnnotatedSentence) -> Result<Tensor> {
        let mut g = Graph::new();
        let e = self.encoder.embed_batch(&mut g, store, &[sentence])?[0];
        let out = self.forward_heads(&mut g, store, e, Needs::DECISION, &mut Mode::Eval)?;
        Ok(g.value(out.decision.expect("requested")).clone())
    }

    /// Full-label prediction in BIO2.
    pub fn predict(&self, store: &ParamStore, sentence: &AnnotatedSentence) -> Result<Vec<FullLabel>> {
        let em = self.decision_potentials(store, sentence)?;
        let idx = self.decode(store, &self.decision, &em)?;
        let bioes: Vec<FullLabel> = idx.iter().map(|&i| self.space.full_label(i).clone()).collect();
        Ok(bioes_to_bio2(&bioes))
    }

    /// BIOES prediction of one sub-task head.
    pub fn predict_partial(&self, store: &ParamStore, sentence: &AnnotatedSentence, head: Head) -> Result<PartialPrediction> {
        let m = self.module(head)?;
        let mut g = Graph::new();
        let e = self.encoder.embed_batch(&mut g, store, &[sentence])?[0];
        let needs = Needs {
            decision: false,
            seg: head == Head::Seg,
            typ: head == Head::Typ,
        };
        let out = self.forward_heads(&mut g, store, e, needs, &mut Mode::Eval)?;
        let em = match head {
            Head::Seg => out.seg,
            Head::Typ => out.typ,
        }
        .expect("requested");
        let idx = self.decode(store, m, g.value(em))?;
        Ok(match head {
            Head::Seg => PartialPrediction::Seg(idx.iter().map(|&i| self.space.seg_label(i)).collect()),
            Head::Typ => PartialPrediction::Typ(idx.iter().map(|&i| self.space.type_label(i).clone()).collect()),
        })
    }

    fn frozen_params(&self) -> Vec<ParamId> {
        self.encoder.frozen_params()
    }
}

/// A network together with its parameter values and vocabulary.
#[derive(Clone, Debug)]
pub struct Model {
    pub net: Network,
    pub params: ParamStore,
    pub vocab: Vocabulary,
    seed: u64,
}

impl Model {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        variant: ModelVariant,
        types: &[String],
        encoder_config: &EncoderConfig,
        weights: LossWeights,
        vocab: Vocabulary,
        pretrained: Option<&EmbeddingTable>,
        seed: u64,
    ) -> Result<Self> {
        let mut params = ParamStore::new();
        let net = Network::new(
            variant,
            types,
            encoder_config,
            weights,
            &vocab,
            pretrained,
            &mut params,
            seed,
        )?;
        Ok(Model {
            net,
            params,
            vocab,
            seed,
        })
    }

    pub fn variant(&self) -> ModelVariant {
        self.net.variant
    }

    pub fn num_weights(&self) -> usize {
        self.params.num_weights()
    }

    pub fn frozen_params(&self) -> Vec<ParamId> {
        self.net.frozen_params()
    }

    fn indexed(&self, sentence: &AnnotatedSentence) -> AnnotatedSentence {
        let mut s = sentence.clone();
        self.vocab.index_sentence(&mut s);
        s
    }

    /// BIO2 prediction; the sentence is indexed against the model's vocabulary.
    pub fn predict(&self, sentence: &AnnotatedSentence) -> Result<Vec<FullLabel>> {
        self.net.predict(&self.params, &self.indexed(sentence))
    }

    pub fn predict_partial(&self, sentence: &AnnotatedSentence, head: Head) -> Result<PartialPrediction> {
        self.net.predict_partial(&self.params, &self.indexed(sentence), head)
    }

    /// Predictions for every sentence of a corpus, evaluated in parallel on
    /// a read-only snapshot.
    pub fn predict_corpus(&self, corpus: &Corpus) -> Result<Vec<Vec<FullLabel>>> {
        corpus.sentences.par_iter().map(|s| self.predict(s)).collect()
    }

    pub fn to_archive(&self) -> Archive {
        let mut a = Archive::from_params(&self.params);
        let cfg = &self.net.encoder.config;
        let mut meta = BTreeMap::new();
        meta.insert("variant", self.variant().to_string());
        meta.insert("types", self.net.space.types().join(" "));
        meta.insert("alpha", self.net.weights.alpha.to_string());
        meta.insert("beta", self.net.weights.beta.to_string());
        meta.insert("char_embed_dim", cfg.char_embed_dim.to_string());
        meta.insert("char_hidden", cfg.char_hidden.to_string());
        meta.insert("word_embed_dim", cfg.word_embed_dim.to_string());
        meta.insert("word_hidden", cfg.word_hidden.to_string());
        meta.insert("dropout", cfg.dropout.to_string());
        meta.insert("use_highway", cfg.use_highway.to_string());
        meta.insert("width_multiplier", cfg.width_multiplier.to_string());
        meta.insert("fine_tune_embeddings", cfg.fine_tune_embeddings.to_string());
        meta.insert("seed", self.seed.to_string());
        let meta: String = meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        a.texts.insert("model".into(), meta);
        a.texts.insert("vocab".into(), self.vocab.to_text());
        a
    }

    pub fn from_archive(a: &Archive) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        let text = a.texts.get("model").ok_or_else(|| bad("archive has no model record".into()))?;
        let meta: BTreeMap<&str, &str> = text.lines().filter_map(|l| l.split_once('=')).collect();
        fn field<T: FromStr>(meta: &BTreeMap<&str, &str>, key: &str) -> Result<T> {
            meta.get(key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Checkpoint(format!("model record lacks a valid `{key}`")))
        }
        let variant: ModelVariant = meta
            .get("variant")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("model record lacks a valid `variant`".into()))?;
        let types: Vec<String> = meta
            .get("types")
            .map(|t| t.split_whitespace().map(String::from).collect())
            .unwrap_or_default();
        let cfg = EncoderConfig {
            char_embed_dim: field(&meta, "char_embed_dim")?,
            char_hidden: field(&meta, "char_hidden")?,
            word_embed_dim: field(&meta, "word_embed_dim")?,
            word_hidden: field(&meta, "word_hidden")?,
            dropout: field(&meta, "dropout")?,
            use_highway: field(&meta, "use_highway")?,
            width_multiplier: field(&meta, "width_multiplier")?,
            fine_tune_embeddings: field(&meta, "fine_tune_embeddings")?,
        };
        let weights = LossWeights {
            alpha: field(&meta, "alpha")?,
            beta: field(&meta, "beta")?,
        };
        let seed: u64 = field(&meta, "seed")?;
        let vocab = Vocabulary::from_text(a.texts.get("vocab").ok_or_else(|| bad("archive has no vocabulary".into()))?)
            .map_err(|e| bad(e.to_string()))?;
        let mut model = Model::new(variant, &types, &cfg, weights, vocab, None, seed)
            .map_err(|e| bad(format!("cannot rebuild model: {e}")))?;
        a.load_params(&mut model.params)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Token;
    use crate::numeric::grad_check;
    use rand::Rng;

    pub(crate) fn tiny_config() -> EncoderConfig {
        EncoderConfig {
            char_embed_dim: 2,
            char_hidden: 2,
            word_embed_dim: 3,
            word_hidden: 3,
            dropout: 0.5,
            ..EncoderConfig::default()
        }
    }

    fn types() -> Vec<String> {
        vec!["pos".into(), "neg".into()]
    }

    fn sentence(words: &[&str], labels: &[&str]) -> AnnotatedSentence {
        let labels = labels.iter().map(|l| l.parse().unwrap()).collect();
        AnnotatedSentence::new(0, words.iter().map(|w| Token::new(*w)).collect(), Annotation::Full(labels)).unwrap()
    }

    fn model(variant: ModelVariant, words: &[&str]) -> Model {
        let mut vocab = Vocabulary::new();
        for w in words {
            vocab.add_word(w);
        }
        let mut m = Model::new(variant, &types(), &tiny_config(), LossWeights::default(), vocab, None, 11).unwrap();
        let mut rng = seeded(5);
        for p in m.params.iter_mut() {
            for v in p.value_mut().data_mut() {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
        m
    }

    const WORDS: [&str; 3] = ["Green", "Book", "rocks"];

    fn indexed(m: &Model) -> AnnotatedSentence {
        let mut s = sentence(&WORDS, &["B-pos", "I-pos", "O"]);
        m.vocab.index_sentence(&mut s);
        s
    }

    fn loss_value(m: &Model, s: &AnnotatedSentence) -> f64 {
        let t = m.net.targets(s, Scheme::Bio2).unwrap();
        let mut g = Graph::new();
        let e = m.net.encoder.embed_batch(&mut g, &m.params, &[s]).unwrap()[0];
        let l = m.net.sentence_loss(&mut g, &m.params, e, &t, &mut Mode::Eval).unwrap();
        g.value(l).item()
    }

    #[test]
    fn variant_names_round_trip() {
        for v in ModelVariant::ALL {
            assert_eq!(v.to_string().parse::<ModelVariant>().unwrap(), v);
        }
        assert!(matches!("lstm".parse::<ModelVariant>(), Err(Error::Config(_))));
    }

    #[test]
    fn joint_loss_is_sum_of_head_nlls() {
        let m = model(ModelVariant::TIg, &WORDS);
        let s = indexed(&m);
        let t = m.net.targets(&s, Scheme::Bio2).unwrap();
        let total = loss_value(&m, &s);
        let part = |t: Targets| {
            let mut g = Graph::new();
            let e = m.net.encoder.embed_batch(&mut g, &m.params, &[&s]).unwrap()[0];
            let out = m.net.forward_heads(&mut g, &m.params, e, Needs::ALL, &mut Mode::Eval).unwrap();
            let l = m.net.joint_loss(&mut g, &m.params, &out, &t).unwrap();
            g.value(l).item()
        };
        let d = part(Targets { decision: t.decision.clone(), ..Targets::default() });
        let sg = part(Targets { seg: t.seg.clone(), ..Targets::default() });
        let ty = part(Targets { typ: t.typ.clone(), ..Targets::default() });
        assert!((total - (d + sg + ty)).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_reduce_to_decision_nll() {
        let mut m = model(ModelVariant::TI, &WORDS);
        m.net.weights = LossWeights { alpha: 0.0, beta: 0.0 };
        let s = indexed(&m);
        let t = m.net.targets(&s, Scheme::Bio2).unwrap();
        let mut g = Graph::new();
        let e = m.net.encoder.embed_batch(&mut g, &m.params, &[&s]).unwrap()[0];
        let out = m.net.forward_heads(&mut g, &m.params, e, Needs::DECISION, &mut Mode::Eval).unwrap();
        let em = g.value(out.decision.unwrap()).clone();
        let tr = m.params.get(m.net.decision.transitions.unwrap()).value().clone();
        let direct = crate::crf::nll_value(&CrfPotentials::new(em, tr).unwrap(), t.decision.as_ref().unwrap()).unwrap();
        assert!((loss_value(&m, &s) - direct).abs() < 1e-12);
    }

    #[test]
    fn every_variant_passes_grad_check() {
        for v in ModelVariant::ALL {
            let mut m = model(v, &WORDS);
            let s = indexed(&m);
            let t = m.net.targets(&s, Scheme::Bio2).unwrap();
            let net = &m.net;
            let report = grad_check(
                &mut m.params,
                |g, store| {
                    let e = net.encoder.embed_batch(g, store, &[&s])?[0];
                    net.sentence_loss(g, store, e, &t, &mut Mode::Eval)
                },
                1e-5,
                1e-4,
            )
            .unwrap();
            assert!(report.passed(), "{v}: {:?}", report.failures().collect::<Vec<_>>());
        }
    }

    #[test]
    fn seg_only_gradients_stay_in_seg_path() {
        let mut m = model(ModelVariant::TIg, &WORDS);
        let mut s = indexed(&m);
        s.annotation = Annotation::SegOnly(vec![Seg::B, Seg::I, Seg::O]);
        let t = m.net.targets(&s, Scheme::Bio2).unwrap();
        let mut g = Graph::new();
        let e = m.net.encoder.embed_batch(&mut g, &m.params, &[&s]).unwrap()[0];
        let l = m.net.sentence_loss(&mut g, &m.params, e, &t, &mut Mode::Eval).unwrap();
        g.backward(l, &mut m.params).unwrap();
        let mut silent = m.net.module_params(None);
        silent.extend(m.net.module_params(Some(Head::Typ)));
        silent.extend(m.net.gate_params());
        for id in silent {
            let p = m.params.get(id);
            assert!(p.grad().data().iter().all(|&x| x == 0.0), "{}", p.name());
        }
        let seg = m.net.module_params(Some(Head::Seg));
        assert!(seg.iter().any(|&id| m.params.get(id).grad().data().iter().any(|&x| x != 0.0)));
    }

    #[test]
    fn baseline_rejects_partial_labels() {
        let m = model(ModelVariant::Baseline, &WORDS);
        let mut s = indexed(&m);
        s.annotation = Annotation::SegOnly(vec![Seg::B, Seg::I, Seg::O]);
        assert!(matches!(m.net.targets(&s, Scheme::Bio2), Err(Error::Config(_))));
        s.annotation = Annotation::Unlabeled;
        assert!(matches!(m.net.targets(&s, Scheme::Bio2), Err(Error::Usage(_))));
        assert!(matches!(m.predict_partial(&s, Head::Seg), Err(Error::Config(_))));
    }

    #[test]
    fn gate_saturation_matches_plain_infusion() {
        let ti = model(ModelVariant::TI, &WORDS);
        let mut tig = model(ModelVariant::TIg, &WORDS);
        for (_, p) in ti.params.iter() {
            let id = tig.params.id(p.name()).unwrap();
            tig.params.set_value(id, p.value().clone()).unwrap();
        }
        let (b1, b2) = tig.net.gate_biases().unwrap();
        let k_seg = tig.net.space.num_seg();
        let k_typ = tig.net.space.num_types();
        tig.params.set_value(b1, Tensor::full(&[1, k_seg], 30.0)).unwrap();
        tig.params.set_value(b2, Tensor::full(&[1, k_typ], 30.0)).unwrap();
        let s = indexed(&ti);
        let a = ti.net.decision_potentials(&ti.params, &s).unwrap();
        let b = tig.net.decision_potentials(&tig.params, &s).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-9);

        // Closed gates leave only the decision BiLSTM.
        tig.params.set_value(b1, Tensor::full(&[1, k_seg], -1e9)).unwrap();
        tig.params.set_value(b2, Tensor::full(&[1, k_typ], -1e9)).unwrap();
        let closed = tig.net.decision_potentials(&tig.params, &s).unwrap();
        let mut g = Graph::new();
        let e = tig.net.encoder.embed_batch(&mut g, &tig.params, &[&s]).unwrap()[0];
        let h = tig.net.decision.lstm.run(&mut g, &tig.params, e).unwrap();
        let zeros = g.constant(Tensor::zeros(&[3, k_seg + k_typ]));
        let x = g.concat(&[h, zeros], 1).unwrap();
        let y = tig.net.decision.emit.apply(&mut g, &tig.params, x).unwrap();
        assert!(g.value(y).max_abs_diff(&closed) < 1e-12);
    }

    #[test]
    fn t_variant_decision_ignores_type_head() {
        let mut m = model(ModelVariant::T, &WORDS);
        let s = indexed(&m);
        let before = m.net.decision_potentials(&m.params, &s).unwrap();
        let w = m.net.typ.as_ref().unwrap().emit.w;
        m.params.get_mut(w).value_mut().data_mut()[0] += 1.0;
        assert_eq!(before, m.net.decision_potentials(&m.params, &s).unwrap());

        let mut g = Graph::new();
        let e = m.net.encoder.embed_batch(&mut g, &m.params, &[&s]).unwrap()[0];
        let hs = m.net.seg.as_ref().unwrap().lstm.run(&mut g, &m.params, e).unwrap();
        let hd = m.net.decision.lstm.run(&mut g, &m.params, e).unwrap();
        assert_ne!(g.value(hs), g.value(hd));
    }

    #[test]
    fn prediction_matches_brute_force() {
        let m = model(ModelVariant::TIg, &["a", "b", "c", "d"]);
        let mut s = sentence(&["a", "b", "c", "d"], &["O", "O", "O", "O"]);
        m.vocab.index_sentence(&mut s);
        let em = m.net.decision_potentials(&m.params, &s).unwrap();
        let tr = m.params.get(m.net.decision.transitions.unwrap()).value().clone();
        let (best, _) = crate::crf::brute_force_argmax(&CrfPotentials::new(em, tr).unwrap()).unwrap();
        let expect: Vec<FullLabel> =
            bioes_to_bio2(&best.iter().map(|&i| m.net.space.full_label(i).clone()).collect::<Vec<_>>());
        let got = m.predict(&s).unwrap();
        assert_eq!(got, expect);
        let bio2 = LabelSpace::new(Scheme::Bio2, &types()).unwrap();
        assert!(got.iter().all(|l| bio2.contains(l)));
    }

    #[test]
    fn partial_predictions_use_bioes_alphabets() {
        let m = model(ModelVariant::TI, &WORDS);
        let s = indexed(&m);
        let PartialPrediction::Seg(a) = m.predict_partial(&s, Head::Seg).unwrap() else { panic!() };
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|x| Scheme::Bioes.contains(*x)));
        assert_eq!(m.predict_partial(&s, Head::Seg).unwrap(), PartialPrediction::Seg(a));
        let PartialPrediction::Typ(t) = m.predict_partial(&s, Head::Typ).unwrap() else { panic!() };
        assert!(t.iter().all(|x| m.net.space.type_index(x).is_some()));
    }

    #[test]
    fn archive_round_trip() {
        let m = model(ModelVariant::TIg, &WORDS);
        let bytes = m.to_archive().to_bytes();
        let back = Model::from_archive(&Archive::from_bytes(&bytes).unwrap()).unwrap();
        let s = indexed(&m);
        assert_eq!(
            m.net.decision_potentials(&m.params, &s).unwrap(),
            back.net.decision_potentials(&back.params, &s).unwrap()
        );
        assert_eq!(back.to_archive().to_bytes(), bytes);
    }

    #[test]
    fn modular_variants_have_more_weights_until_narrowed() {
        let vocab = Vocabulary::new();
        let cfg = EncoderConfig {
            word_hidden: 30,
            ..tiny_config()
        };
        let count = |v, cfg: &EncoderConfig| {
            Model::new(v, &types(), cfg, LossWeights::default(), vocab.clone(), None, 0)
                .unwrap()
                .num_weights()
        };
        let base = count(ModelVariant::Baseline, &cfg);
        assert!(count(ModelVariant::TI, &cfg) > base);
        assert!(count(ModelVariant::TIg, &cfg) > base);
        let narrow = EncoderConfig {
            width_multiplier: 0.5,
            ..cfg.clone()
        };
        let tig = count(ModelVariant::TIg, &narrow) as f64;
        assert!((tig - base as f64).abs() / base as f64 <= 0.05, "{tig} vs {base}");
    }
}
