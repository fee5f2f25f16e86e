//! Linear-chain CRF: sequence scores, the forward algorithm, Viterbi
//! decoding and the negative log-likelihood, plus exhaustive oracles.
//!
//! Transition matrices are `(K + 2) × (K + 2)`: rows and columns `0..K` are
//! labels, `K` is the virtual START state and `K + 1` the virtual STOP state.

use crate::error::{Error, Result};
use crate::labels::LabelSpace;
use crate::numeric::{log_sum_exp, Graph, Tensor, Var};

/// Largest number of label sequences the exhaustive oracles will enumerate.
pub const MAX_ENUMERATION: usize = 1_000_000;

/// Emission and transition scores of one sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct CrfPotentials {
    emissions: Tensor,
    transitions: Tensor,
}

impl CrfPotentials {
    /// Transitions into START and out of STOP are overwritten with `-inf`.
    pub fn new(emissions: Tensor, mut transitions: Tensor) -> Result<Self> {
        let (len, k) = emissions.dims2()?;
        let (r, c) = transitions.dims2()?;
        if r != k + 2 || c != k + 2 {
            return Err(Error::dim(format!(
                "transitions {:?} do not match {len}×{k} emissions (need {}×{})",
                transitions.shape(),
                k + 2,
                k + 2
            )));
        }
        let n = k + 2;
        let data = transitions.data_mut();
        for i in 0..n {
            data[i * n + k] = f64::NEG_INFINITY;
            data[(k + 1) * n + i] = f64::NEG_INFINITY;
        }
        Ok(CrfPotentials {
            emissions,
            transitions,
        })
    }

    pub fn zeros(len: usize, k: usize) -> Self {
        Self::new(Tensor::zeros(&[len, k]), Tensor::zeros(&[k + 2, k + 2])).expect("consistent")
    }

    pub fn len(&self) -> usize {
        self.emissions.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn num_labels(&self) -> usize {
        self.emissions.shape()[1]
    }

    pub fn emissions(&self) -> &Tensor {
        &self.emissions
    }

    pub fn transitions(&self) -> &Tensor {
        &self.transitions
    }

    pub fn emission(&self, t: usize, k: usize) -> f64 {
        self.emissions.at(t, k)
    }

    pub fn transition(&self, from: usize, to: usize) -> f64 {
        self.transitions.at(from, to)
    }

    pub fn start(&self, k: usize) -> f64 {
        self.transitions.at(self.num_labels(), k)
    }

    pub fn stop(&self, k: usize) -> f64 {
        self.transitions.at(k, self.num_labels() + 1)
    }

    /// Adds a `(K + 2) × (K + 2)` mask such as [`constrained_mask`].
    pub fn masked(&self, mask: &Tensor) -> Result<Self> {
        if mask.shape() != self.transitions.shape() {
            return Err(Error::dim(format!(
                "mask {:?} does not match transitions {:?}",
                mask.shape(),
                self.transitions.shape()
            )));
        }
        let data = self
            .transitions
            .data()
            .iter()
            .zip(mask.data())
            .map(|(a, b)| a + b)
            .collect();
        CrfPotentials::new(
            self.emissions.clone(),
            Tensor::new(self.transitions.shape().to_vec(), data)?,
        )
    }

    fn check_labels(&self, y: &[usize]) -> Result<()> {
        if y.len() != self.len() {
            return Err(Error::dim(format!(
                "label sequence of length {} for a sentence of length {}",
                y.len(),
                self.len()
            )));
        }
        if let Some(&bad) = y.iter().find(|&&k| k >= self.num_labels()) {
            return Err(Error::Usage(format!(
                "label index {bad} out of range for {} labels",
                self.num_labels()
            )));
        }
        Ok(())
    }
}

/// Unnormalized log score of the label sequence `y`.
pub fn score_sequence(p: &CrfPotentials, y: &[usize]) -> Result<f64> {
    p.check_labels(y)?;
    let mut s = p.start(y[0]) + p.stop(y[y.len() - 1]);
    for (t, &k) in y.iter().enumerate() {
        s += p.emission(t, k);
        if t > 0 {
            s += p.transition(y[t - 1], k);
        }
    }
    Ok(s)
}

/// Log-space forward scores `alpha[t][k]`.
fn forward_scores(p: &CrfPotentials) -> Vec<Vec<f64>> {
    let k = p.num_labels();
    let mut alpha = Vec::with_capacity(p.len());
    alpha.push((0..k).map(|j| p.start(j) + p.emission(0, j)).collect::<Vec<_>>());
    for t in 1..p.len() {
        let prev: &Vec<f64> = &alpha[t - 1];
        let row = (0..k)
            .map(|j| log_sum_exp((0..k).map(|i| prev[i] + p.transition(i, j))) + p.emission(t, j))
            .collect();
        alpha.push(row);
    }
    alpha
}

/// `log Z`, by the forward recursion.
pub fn log_partition(p: &CrfPotentials) -> f64 {
    let alpha = forward_scores(p);
    let last = &alpha[p.len() - 1];
    log_sum_exp((0..p.num_labels()).map(|j| last[j] + p.stop(j)))
}

/// Per-position label marginals by forward-backward.
pub fn marginals(p: &CrfPotentials) -> Tensor {
    let (len, k) = (p.len(), p.num_labels());
    let alpha = forward_scores(p);
    let mut beta = vec![vec![0.0; k]; len];
    for j in 0..k {
        beta[len - 1][j] = p.stop(j);
    }
    for t in (0..len - 1).rev() {
        for i in 0..k {
            beta[t][i] = log_sum_exp(
                (0..k).map(|j| p.transition(i, j) + p.emission(t + 1, j) + beta[t + 1][j]),
            );
        }
    }
    let log_z = log_partition(p);
    let mut out = Vec::with_capacity(len * k);
    for t in 0..len {
        for j in 0..k {
            out.push((alpha[t][j] + beta[t][j] - log_z).exp());
        }
    }
    Tensor::new(vec![len, k], out).expect("len × k")
}

/// Highest-scoring label sequence and its score.
///
/// Ties go to the lower label index, both for the final label and at every
/// backpointer.
pub fn viterbi(p: &CrfPotentials) -> (Vec<usize>, f64) {
    let (len, k) = (p.len(), p.num_labels());
    let mut delta: Vec<f64> = (0..k).map(|j| p.start(j) + p.emission(0, j)).collect();
    let mut back = vec![vec![0usize; k]; len];
    for t in 1..len {
        let mut next = vec![0.0; k];
        for j in 0..k {
            let mut best = 0;
            let mut best_score = delta[0] + p.transition(0, j);
            for i in 1..k {
                let s = delta[i] + p.transition(i, j);
                if s > best_score {
                    best = i;
                    best_score = s;
                }
            }
            back[t][j] = best;
            next[j] = best_score + p.emission(t, j);
        }
        delta = next;
    }
    let mut last = 0;
    let mut best_score = delta[0] + p.stop(0);
    for (j, d) in delta.iter().enumerate().skip(1) {
        let s = d + p.stop(j);
        if s > best_score {
            last = j;
            best_score = s;
        }
    }
    let mut path = vec![last; len];
    for t in (1..len).rev() {
        path[t - 1] = back[t][path[t]];
    }
    (path, best_score)
}

/// Negative log-likelihood of `gold`, as a plain number.
pub fn nll_value(p: &CrfPotentials, gold: &[usize]) -> Result<f64> {
    Ok(log_partition(p) - score_sequence(p, gold)?)
}

/// `-inf` for transitions that would produce an ill-formed sequence in the
/// space's scheme, `0` elsewhere.
pub fn constrained_mask(space: &LabelSpace) -> Tensor {
    let k = space.num_full();
    let n = k + 2;
    let mut mask = Tensor::zeros(&[n, n]);
    let labels = space.full_labels();
    let state = |i: usize| if i < k { Some(&labels[i]) } else { None };
    for from in 0..n {
        for to in 0..n {
            let allowed = match (from, to) {
                (f, _) if f == k + 1 => false,
                (_, t) if t == k => false,
                (f, t) => space.transition_allowed(
                    if f == k { None } else { state(f) },
                    if t == k + 1 { None } else { state(t) },
                ),
            };
            if !allowed {
                mask.data_mut()[from * n + to] = f64::NEG_INFINITY;
            }
        }
    }
    mask
}

fn enumerate_sequences(p: &CrfPotentials) -> Result<impl Iterator<Item = Vec<usize>>> {
    let (len, k) = (p.len(), p.num_labels());
    let total = (k as u128).checked_pow(len as u32).unwrap_or(u128::MAX);
    if total > MAX_ENUMERATION as u128 {
        return Err(Error::Usage(format!(
            "{k}^{len} label sequences exceed the enumeration limit of {MAX_ENUMERATION}"
        )));
    }
    Ok((0..total as usize).map(move |mut code| {
        let mut y = vec![0; len];
        // position 0 varies fastest
        for slot in y.iter_mut() {
            *slot = code % k;
            code /= k;
        }
        y
    }))
}

/// `log Z` by explicit enumeration of all `K^L` sequences.
pub fn brute_force_log_partition(p: &CrfPotentials) -> Result<f64> {
    let scores: Vec<f64> = enumerate_sequences(p)?
        .map(|y| score_sequence(p, &y).expect("valid by construction"))
        .collect();
    Ok(log_sum_exp(scores.iter().copied()))
}

/// Exhaustive argmax. Among equal scores the winner is the sequence that is
/// smallest when compared from the last position backwards, which is the
/// order implied by [`viterbi`]'s tie-breaking.
pub fn brute_force_argmax(p: &CrfPotentials) -> Result<(Vec<usize>, f64)> {
    let mut best: Option<(Vec<usize>, f64)> = None;
    for y in enumerate_sequences(p)? {
        let s = score_sequence(p, &y).expect("valid by construction");
        let better = match &best {
            None => true,
            Some((by, bs)) => s > *bs || (s == *bs && y.iter().rev().lt(by.iter().rev())),
        };
        if better {
            best = Some((y, s));
        }
    }
    Ok(best.expect("at least one sequence"))
}

/// Differentiable pieces of the CRF over graph nodes.
///
/// `emissions` is `[L, K]` and `transitions` `[K + 2, K + 2]`; START/STOP
/// entries that are never part of a path are never read.
pub struct CrfGraph {
    len: usize,
    k: usize,
    emissions: Var,
    transitions: Var,
}

impl CrfGraph {
    pub fn new(g: &Graph, emissions: Var, transitions: Var) -> Result<Self> {
        let (len, k) = g.value(emissions).dims2()?;
        if g.shape(transitions) != [k + 2, k + 2] {
            return Err(Error::dim(format!(
                "transitions {:?} do not match emissions {:?}",
                g.shape(transitions),
                g.shape(emissions)
            )));
        }
        Ok(CrfGraph {
            len,
            k,
            emissions,
            transitions,
        })
    }

    fn flat(&self, from: usize, to: usize) -> usize {
        from * (self.k + 2) + to
    }

    /// `log Z` built from graph primitives.
    pub fn log_partition(&self, g: &mut Graph) -> Result<Var> {
        let k = self.k;
        let start_idx: Vec<usize> = (0..k).map(|j| self.flat(k, j)).collect();
        let stop_idx: Vec<usize> = (0..k).map(|i| self.flat(i, k + 1)).collect();
        let inner_idx: Vec<usize> = (0..k)
            .flat_map(|i| (0..k).map(move |j| (i, j)))
            .map(|(i, j)| self.flat(i, j))
            .collect();
        let start = g.gather(self.transitions, &start_idx)?;
        let start = g.reshape(start, &[1, k])?;
        let stop = g.gather(self.transitions, &stop_idx)?;
        let stop = g.reshape(stop, &[1, k])?;
        let trans = g.gather(self.transitions, &inner_idx)?;
        let trans = g.reshape(trans, &[k, k])?;

        let first = g.slice(self.emissions, 0, 0, 1)?;
        let mut alpha = g.add(first, start)?;
        for t in 1..self.len {
            let col = g.transpose(alpha)?;
            let col = g.broadcast(col, &[k, k])?;
            let paths = g.add(col, trans)?;
            let reduced = g.logsumexp(paths, 0)?;
            let emit = g.slice(self.emissions, 0, t, 1)?;
            alpha = g.add(reduced, emit)?;
        }
        let last = g.add(alpha, stop)?;
        let z = g.logsumexp(last, 1)?;
        g.reshape(z, &[1])
    }

    /// Score of `y`, built from graph primitives.
    pub fn score(&self, g: &mut Graph, y: &[usize]) -> Result<Var> {
        if y.len() != self.len {
            return Err(Error::dim(format!(
                "label sequence of length {} for a sentence of length {}",
                y.len(),
                self.len
            )));
        }
        if let Some(&bad) = y.iter().find(|&&k| k >= self.k) {
            return Err(Error::Usage(format!(
                "label index {bad} out of range for {} labels",
                self.k
            )));
        }
        let emit_idx: Vec<usize> = y.iter().enumerate().map(|(t, &k)| t * self.k + k).collect();
        let mut trans_idx = vec![self.flat(self.k, y[0])];
        trans_idx.extend(y.windows(2).map(|w| self.flat(w[0], w[1])));
        trans_idx.push(self.flat(y[self.len - 1], self.k + 1));
        let e = g.gather(self.emissions, &emit_idx)?;
        let e = g.sum(e);
        let t = g.gather(self.transitions, &trans_idx)?;
        let t = g.sum(t);
        g.add(e, t)
    }

    /// `log Z - score(gold)`.
    pub fn nll(&self, g: &mut Graph, gold: &[usize]) -> Result<Var> {
        let score = self.score(g, gold)?;
        let z = self.log_partition(g)?;
        g.sub(z, score)
    }
}

/// Per-token softmax cross-entropy, the CRF-free counterpart of
/// [`CrfGraph::nll`].
pub fn token_nll(g: &mut Graph, emissions: Var, gold: &[usize]) -> Result<Var> {
    let (len, k) = g.value(emissions).dims2()?;
    if gold.len() != len {
        return Err(Error::dim(format!(
            "label sequence of length {} for a sentence of length {len}",
            gold.len()
        )));
    }
    if let Some(&bad) = gold.iter().find(|&&y| y >= k) {
        return Err(Error::Usage(format!("label index {bad} out of range for {k} labels")));
    }
    let logp = g.log_softmax_rows(emissions)?;
    let idx: Vec<usize> = gold.iter().enumerate().map(|(t, &y)| t * k + y).collect();
    let picked = g.gather(logp, &idx)?;
    let s = g.sum(picked);
    Ok(g.neg(s))
}

/// Index of the largest entry of each row, lowest index on ties.
pub fn argmax_rows(emissions: &Tensor) -> Vec<usize> {
    let (len, k) = emissions.dims2().expect("matrix");
    (0..len)
        .map(|t| {
            let row = emissions.row_slice(t);
            (1..k).fold(0, |best, j| if row[j] > row[best] { j } else { best })
        })
        .collect()
}
