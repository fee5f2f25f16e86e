//! Token representations and the word-level BiLSTMs.
//!
//! A token is represented by `e_t = [highway(char BiLSTM); word embedding]`.
//! The embedding stage is shared by every module of a model; each module then
//! runs its own private BiLSTM over the `e_t` sequence.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{AnnotatedSentence, EmbeddingTable, Vocabulary};
use crate::error::{Error, Result};
use crate::numeric::{Graph, ParamId, ParamStore, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub char_embed_dim: usize,
    pub char_hidden: usize,
    pub word_embed_dim: usize,
    pub word_hidden: usize,
    pub dropout: f64,
    pub use_highway: bool,
    /// Scales the hidden size of the private BiLSTMs of modular variants.
    pub width_multiplier: f64,
    pub fine_tune_embeddings: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            char_embed_dim: 30,
            char_hidden: 25,
            word_embed_dim: 100,
            word_hidden: 300,
            dropout: 0.5,
            use_highway: true,
            width_multiplier: 1.0,
            fine_tune_embeddings: true,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("char_embed_dim", self.char_embed_dim),
            ("char_hidden", self.char_hidden),
            ("word_embed_dim", self.word_embed_dim),
            ("word_hidden", self.word_hidden),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, d)| *d == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} is outside [0, 1)", self.dropout)));
        }
        if !(self.width_multiplier > 0.0 && self.width_multiplier.is_finite()) {
            return Err(Error::Config("width_multiplier must be positive".into()));
        }
        Ok(())
    }

    /// Length of `e_t`.
    pub fn token_dim(&self) -> usize {
        2 * self.char_hidden + self.word_embed_dim
    }

    /// Hidden size of one direction of a private word-level BiLSTM.
    pub fn private_hidden(&self, modular: bool) -> usize {
        if modular {
            ((self.word_hidden as f64 * self.width_multiplier).round() as usize).max(1)
        } else {
            self.word_hidden
        }
    }
}

/// Forward pass mode. Training draws dropout masks from the given stream.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

/// Inverted dropout: kept entries are scaled by `1/(1-rate)`, so evaluation
/// uses the values as they are.
pub fn dropout(g: &mut Graph, x: Var, rate: f64, mode: &mut Mode<'_>) -> Result<Var> {
    let Mode::Train(rng) = mode else { return Ok(x) };
    if rate == 0.0 {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - rate);
    let shape = g.shape(x).to_vec();
    let n: usize = shape.iter().product();
    let mask: Vec<f64> = (0..n)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let mask = g.constant(Tensor::new(shape, mask)?);
    g.hadamard(x, mask)
}

pub(crate) fn xavier(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::new(vec![rows, cols], data).expect("positive dims")
}

fn uniform(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let bound = (3.0 / cols as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::new(vec![rows, cols], data).expect("positive dims")
}

/// One LSTM direction. Gates are packed `[i | f | o | g]` along columns.
#[derive(Clone, Debug)]
pub struct LstmParams {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let w_x = store.add(format!("{name}.w_x"), xavier(rng, input_dim, 4 * hidden))?;
        let w_h = store.add(format!("{name}.w_h"), xavier(rng, hidden, 4 * hidden))?;
        let mut bias = Tensor::zeros(&[1, 4 * hidden]);
        bias.data_mut()[hidden..2 * hidden].fill(1.0);
        let b = store.add(format!("{name}.b"), bias)?;
        Ok(LstmParams {
            w_x,
            w_h,
            b,
            input_dim,
            hidden,
        })
    }

    pub fn ids(&self) -> [ParamId; 3] {
        [self.w_x, self.w_h, self.b]
    }

    pub fn vars(&self, g: &mut Graph, store: &ParamStore) -> LstmVars {
        LstmVars {
            w_x: g.param(store, self.w_x),
            w_h: g.param(store, self.w_h),
            b: g.param(store, self.b),
            hidden: self.hidden,
        }
    }
}

/// Graph handles of one direction's parameters.
#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub w_x: Var,
    pub w_h: Var,
    pub b: Var,
    pub hidden: usize,
}

/// One LSTM step on a batch of rows: `x_t` is `[n, d]`, states `[n, H]`.
pub fn lstm_step(g: &mut Graph, p: &LstmVars, x_t: Var, h_prev: Var, c_prev: Var) -> Result<(Var, Var)> {
    let pre = g.matmul(x_t, p.w_x)?;
    let pre = g.add_row(pre, p.b)?;
    lstm_step_projected(g, p, pre, h_prev, c_prev)
}

/// [`lstm_step`] with the input projection `x_t W_x + b` already applied.
fn lstm_step_projected(g: &mut Graph, p: &LstmVars, pre: Var, h_prev: Var, c_prev: Var) -> Result<(Var, Var)> {
    let h = p.hidden;
    let rec = g.matmul(h_prev, p.w_h)?;
    let z = g.add(pre, rec)?;
    let i = g.slice(z, 1, 0, h)?;
    let i = g.sigmoid(i);
    let f = g.slice(z, 1, h, h)?;
    let f = g.sigmoid(f);
    let o = g.slice(z, 1, 2 * h, h)?;
    let o = g.sigmoid(o);
    let cand = g.slice(z, 1, 3 * h, h)?;
    let cand = g.tanh(cand);
    let keep = g.hadamard(f, c_prev)?;
    let write = g.hadamard(i, cand)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c);
    let h_t = g.hadamard(o, tc)?;
    Ok((h_t, c))
}

/// Runs one direction over projected inputs `pre[t]` (each `[n, 4H]`),
/// returning the hidden state after each step in processing order.
fn unroll(g: &mut Graph, p: &LstmVars, pre: &[Var]) -> Result<Vec<Var>> {
    let n = g.shape(pre[0])[0];
    let mut h = g.constant(Tensor::zeros(&[n, p.hidden]));
    let mut c = g.constant(Tensor::zeros(&[n, p.hidden]));
    let mut out = Vec::with_capacity(pre.len());
    for &x in pre {
        (h, c) = lstm_step_projected(g, p, x, h, c)?;
        out.push(h);
    }
    Ok(out)
}

/// Runs one direction over the rows of `xs` (`[L, d]`), returning `[L, H]`
/// in sentence order; `reverse` processes the rows last to first.
pub fn run_lstm(g: &mut Graph, p: &LstmVars, xs: Var, reverse: bool) -> Result<Var> {
    let (len, d) = g.value(xs).dims2()?;
    if d != g.shape(p.w_x)[0] {
        return Err(Error::dim(format!(
            "LSTM input width {d} does not match parameters {:?}",
            g.shape(p.w_x)
        )));
    }
    let proj = g.matmul(xs, p.w_x)?;
    let proj = g.add_row(proj, p.b)?;
    let order: Vec<usize> = if reverse { (0..len).rev().collect() } else { (0..len).collect() };
    let pre = order
        .iter()
        .map(|&t| g.slice(proj, 0, t, 1))
        .collect::<Result<Vec<_>>>()?;
    let mut hs = unroll(g, p, &pre)?;
    if reverse {
        hs.reverse();
    }
    g.concat(&hs, 0)
}

#[derive(Clone, Debug)]
pub struct BiLstmParams {
    pub fwd: LstmParams,
    pub bwd: LstmParams,
}

impl BiLstmParams {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(BiLstmParams {
            fwd: LstmParams::new(store, &format!("{name}.fwd"), input_dim, hidden, rng)?,
            bwd: LstmParams::new(store, &format!("{name}.bwd"), input_dim, hidden, rng)?,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.fwd.hidden + self.bwd.hidden
    }

    /// `h_t = [→h_t; ←h_t]` for every row of `xs`, shape `[L, 2H]`.
    pub fn run(&self, g: &mut Graph, store: &ParamStore, xs: Var) -> Result<Var> {
        let f = self.fwd.vars(g, store);
        let b = self.bwd.vars(g, store);
        let hf = run_lstm(g, &f, xs, false)?;
        let hb = run_lstm(g, &b, xs, true)?;
        g.concat(&[hf, hb], 1)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.fwd.ids().into_iter().chain(self.bwd.ids()).collect()
    }
}

/// Single highway layer: `y = g ⊙ relu(W_h x + b_h) + (1 − g) ⊙ x` with
/// `g = σ(W_g x + b_g)`.
#[derive(Clone, Debug)]
pub struct HighwayParams {
    pub w_h: ParamId,
    pub b_h: ParamId,
    pub w_g: ParamId,
    pub b_g: ParamId,
}

impl HighwayParams {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(HighwayParams {
            w_h: store.add(format!("{name}.w_h"), xavier(rng, dim, dim))?,
            b_h: store.add(format!("{name}.b_h"), Tensor::zeros(&[1, dim]))?,
            w_g: store.add(format!("{name}.w_g"), xavier(rng, dim, dim))?,
            b_g: store.add(format!("{name}.b_g"), Tensor::zeros(&[1, dim]))?,
        })
    }

    /// Applies the layer to every row of `x` (`[n, dim]`).
    pub fn apply(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let (w_h, b_h, w_g, b_g) = (
            g.param(store, self.w_h),
            g.param(store, self.b_h),
            g.param(store, self.w_g),
            g.param(store, self.b_g),
        );
        let t = g.matmul(x, w_h)?;
        let t = g.add_row(t, b_h)?;
        let t = g.relu(t);
        let gate = g.matmul(x, w_g)?;
        let gate = g.add_row(gate, b_g)?;
        let gate = g.sigmoid(gate);
        let ones = g.constant(Tensor::ones(g.shape(gate)));
        let carry = g.sub(ones, gate)?;
        let a = g.hadamard(gate, t)?;
        let b = g.hadamard(carry, x)?;
        g.add(a, b)
    }
}

/// The shared embedding stage.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub char_emb: ParamId,
    pub char_lstm: BiLstmParams,
    pub highway: Option<HighwayParams>,
    pub word_emb: ParamId,
}

impl Encoder {
    /// Registers the embedding-stage parameters. Rows of words found in
    /// `pretrained` start from their pretrained vectors.
    pub fn new(
        config: &EncoderConfig,
        vocab: &Vocabulary,
        pretrained: Option<&EmbeddingTable>,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        let char_emb = store.add(
            "embed.chars",
            uniform(rng, vocab.num_chars(), config.char_embed_dim),
        )?;
        let char_lstm = BiLstmParams::new(store, "embed.char_lstm", config.char_embed_dim, config.char_hidden, rng)?;
        let highway = if config.use_highway {
            Some(HighwayParams::new(store, "embed.highway", 2 * config.char_hidden, rng)?)
        } else {
            None
        };
        let mut words = uniform(rng, vocab.num_words(), config.word_embed_dim);
        if let Some(table) = pretrained {
            if table.dimension() != config.word_embed_dim {
                return Err(Error::Config(format!(
                    "pretrained embeddings have dimension {}, word_embed_dim is {}",
                    table.dimension(),
                    config.word_embed_dim
                )));
            }
            let d = config.word_embed_dim;
            for id in 2..vocab.num_words() {
                if let Some(v) = table.get(vocab.word(id)) {
                    words.data_mut()[id * d..(id + 1) * d].copy_from_slice(v);
                }
            }
            words.data_mut()[d..2 * d].copy_from_slice(table.oov());
        }
        let word_emb = store.add("embed.words", words)?;
        Ok(Encoder {
            config: config.clone(),
            char_emb,
            char_lstm,
            highway,
            word_emb,
        })
    }

    /// Parameters that the optimizer must leave alone.
    pub fn frozen_params(&self) -> Vec<ParamId> {
        if self.config.fine_tune_embeddings {
            vec![]
        } else {
            vec![self.word_emb]
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.char_emb, self.word_emb];
        ids.extend(self.char_lstm.param_ids());
        if let Some(h) = &self.highway {
            ids.extend([h.w_h, h.b_h, h.w_g, h.b_g]);
        }
        ids
    }

    /// `[→h_last; ←h_first]` of the character BiLSTM for each word, `[n, 2·char_hidden]`.
    pub fn char_encode(&self, g: &mut Graph, store: &ParamStore, words: &[&[usize]]) -> Result<Var> {
        if words.is_empty() {
            return Err(Error::dim("char_encode of zero words"));
        }
        let emb = g.param(store, self.char_emb);
        let f = self.char_lstm.fwd.vars(g, store);
        let b = self.char_lstm.bwd.vars(g, store);

        // Words of equal length are run together as the rows of one batch.
        let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
        for (i, w) in words.iter().enumerate() {
            groups.entry(w.len().max(1)).or_default().push(i);
        }
        let mut lengths: Vec<usize> = groups.keys().copied().collect();
        lengths.sort_unstable();

        let mut blocks = Vec::new();
        let mut row_of = vec![0; words.len()];
        let mut next_row = 0;
        for len in lengths {
            let members = &groups[&len];
            let at = |w: &[usize], p: usize| w.get(p).copied().unwrap_or(crate::data::PAD_ID);
            let mut steps = Vec::with_capacity(len);
            for p in 0..len {
                let ids: Vec<usize> = members.iter().map(|&i| at(words[i], p)).collect();
                steps.push(g.index_rows(emb, &ids)?);
            }
            let project = |g: &mut Graph, v: &LstmVars, x: Var| -> Result<Var> {
                let pre = g.matmul(x, v.w_x)?;
                g.add_row(pre, v.b)
            };
            let pre_f = steps.iter().map(|&x| project(g, &f, x)).collect::<Result<Vec<_>>>()?;
            let pre_b = steps.iter().rev().map(|&x| project(g, &b, x)).collect::<Result<Vec<_>>>()?;
            let hf = *unroll(g, &f, &pre_f)?.last().expect("nonempty word");
            let hb = *unroll(g, &b, &pre_b)?.last().expect("nonempty word");
            blocks.push(g.concat(&[hf, hb], 1)?);
            for &i in members {
                row_of[i] = next_row;
                next_row += 1;
            }
        }
        let all = g.concat(&blocks, 0)?;
        g.index_rows(all, &row_of)
    }

    /// `e_t` for every token of every sentence, before dropout. Character
    /// encodings are computed once per distinct word of the batch.
    pub fn embed_batch(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        sentences: &[&AnnotatedSentence],
    ) -> Result<Vec<Var>> {
        let mut distinct: HashMap<&[usize], usize> = HashMap::new();
        let mut words: Vec<&[usize]> = Vec::new();
        let mut rows = Vec::with_capacity(sentences.len());
        for s in sentences {
            if s.tokens.is_empty() {
                return Err(Error::Usage(format!("sentence {} is empty", s.id)));
            }
            let mut r = Vec::with_capacity(s.len());
            for t in &s.tokens {
                if !t.is_indexed() {
                    return Err(Error::Usage(format!(
                        "token `{}` of sentence {} is not indexed",
                        t.surface, s.id
                    )));
                }
                let next = words.len();
                let id = *distinct.entry(t.chars.as_slice()).or_insert_with(|| {
                    words.push(t.chars.as_slice());
                    next
                });
                r.push(id);
            }
            rows.push(r);
        }
        let mut chars = self.char_encode(g, store, &words)?;
        if let Some(h) = &self.highway {
            chars = h.apply(g, store, chars)?;
        }
        let word_emb = g.param(store, self.word_emb);
        sentences
            .iter()
            .zip(rows)
            .map(|(s, r)| {
                let c = g.index_rows(chars, &r)?;
                let ids: Vec<usize> = s.tokens.iter().map(|t| t.word_id.expect("indexed")).collect();
                let w = g.index_rows(word_emb, &ids)?;
                g.concat(&[c, w], 1)
            })
            .collect()
    }
}

/// Runs `bilstm` over dropped-out `e` and drops out its output.
pub fn encode_private(
    g: &mut Graph,
    store: &ParamStore,
    bilstm: &BiLstmParams,
    e: Var,
    rate: f64,
    mode: &mut Mode<'_>,
) -> Result<Var> {
    let x = dropout(g, e, rate, mode)?;
    let h = bilstm.run(g, store, x)?;
    dropout(g, h, rate, mode)
}

pub(crate) fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
