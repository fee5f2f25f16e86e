//! Randomized invariants across the numeric core, label algebra, data I/O,
//! CRF, encoder, training control and evaluation.

use proptest::prelude::*;

use modcrf::crf::{
    brute_force_argmax, brute_force_log_partition, log_partition, nll_value, score_sequence, viterbi, CrfPotentials,
};
use modcrf::data::{
    generate_synthetic_corpus, project_partial, read_conll_str, split_folds, write_conll_string, Projection,
    Remainder, SynthLexicon, SynthSpec,
};
use modcrf::encoder::{run_lstm, LstmParams};
use modcrf::eval::{extract_spans, render_spans, span_f1, EvalMode, Span};
use modcrf::labels::{
    bio2_to_bioes, bioes_to_bio2, compose, decompose, FullLabel, LabelSpace, Scheme, Seg, TypeLabel,
};
use modcrf::numeric::{grad_check, log_sum_exp, Graph, ParamStore, Tensor, Var};
use modcrf::train::{EarlyStop, StopDecision};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

/// Checks `op` through `Σ w ⊙ op(x)` with fixed random weights `w`, so
/// that every output entry contributes a distinct factor.
fn check_op(
    shape: &[usize],
    x: Vec<f64>,
    weights_seed: u64,
    op: impl Fn(&mut Graph, Var) -> modcrf::Result<Var>,
) -> Result<(), TestCaseError> {
    let mut store = ParamStore::new();
    let id = store.add("x", Tensor::new(shape.to_vec(), x).unwrap()).unwrap();
    let report = grad_check(
        &store,
        |g, s| {
            let xv = g.param(s, id);
            let y = op(g, xv)?;
            let n = g.value(y).numel();
            let mut rng = ChaCha8Rng::seed_from_u64(weights_seed);
            let w: Vec<f64> = (0..n).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
            let w = g.constant(Tensor::new(g.shape(y).to_vec(), w).unwrap());
            let p = g.hadamard(y, w)?;
            Ok(g.sum(p))
        },
        1e-5,
        1e-4,
    )
    .unwrap();
    prop_assert!(report.passed(), "{:?}", report.params);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn elementwise_gradients(x in values(6), seed in 0u64..1000) {
        check_op(&[2, 3], x.clone(), seed, |g, v| Ok(g.sigmoid(v)))?;
        check_op(&[2, 3], x.clone(), seed, |g, v| Ok(g.tanh(v)))?;
        check_op(&[2, 3], x.clone(), seed, |g, v| Ok(g.exp(v)))?;
        check_op(&[2, 3], x.clone(), seed, |g, v| Ok(g.neg(v)))?;
        check_op(&[2, 3], x.clone(), seed, |g, v| Ok(g.scale(v, -1.7)))?;
        let away_from_kink: Vec<f64> = x.iter().map(|&v| if v.abs() < 1e-3 { 0.5 } else { v }).collect();
        check_op(&[2, 3], away_from_kink, seed, |g, v| Ok(g.relu(v)))?;
        let positive: Vec<f64> = x.iter().map(|v| v.abs() + 0.1).collect();
        check_op(&[2, 3], positive, seed, |g, v| g.log(v))?;
    }

    #[test]
    fn binary_gradients(x in values(6), other in values(6), seed in 0u64..1000) {
        let c = Tensor::new(vec![2, 3], other.clone()).unwrap();
        check_op(&[2, 3], x.clone(), seed, |g, v| { let k = g.constant(c.clone()); g.add(v, k) })?;
        check_op(&[2, 3], x.clone(), seed, |g, v| { let k = g.constant(c.clone()); g.sub(k, v) })?;
        check_op(&[2, 3], x.clone(), seed, |g, v| g.hadamard(v, v))?;
        let m = Tensor::new(vec![3, 2], other).unwrap();
        check_op(&[2, 3], x.clone(), seed, |g, v| { let k = g.constant(m.clone()); g.matmul(v, k) })?;
        check_op(&[2, 3], x, seed, |g, v| { let k = g.constant(m.clone()); g.matmul(k, v) })?;
    }

    #[test]
    fn structural_gradients(x in values(6), seed in 0u64..1000) {
        check_op(&[2, 3], x.clone(), seed, |g, v| Ok(g.sum(v)))?;
        check_op(&[2, 3], x.clone(), seed, |g, v| g.logsumexp(v, 0))?;
        check_op(&[2, 3], x.clone(), seed, |g, v| g.logsumexp(v, 1))?;
        check_op(&[2, 3], x.clone(), seed, |g, v| g.log_softmax_rows(v))?;
        check_op(&[2, 3], x.clone(), seed, |g, v| g.transpose(v))?;
        check_op(&[2, 3], x.clone(), seed, |g, v| g.reshape(v, &[3, 2]))?;
        check_op(&[2, 3], x.clone(), seed, |g, v| g.slice(v, 1, 1, 2))?;
        check_op(&[2, 3], x.clone(), seed, |g, v| g.concat(&[v, v], 0))?;
        check_op(&[2, 3], x.clone(), seed, |g, v| g.concat(&[v, v], 1))?;
        check_op(&[2, 3], x.clone(), seed, |g, v| g.gather(v, &[5, 0, 0, 3]))?;
        check_op(&[2, 3], x.clone(), seed, |g, v| g.index_rows(v, &[1, 0, 1]))?;
        check_op(&[1, 6], x.clone(), seed, |g, v| g.broadcast(v, &[3, 6]))?;
        check_op(&[1, 6], x, seed, |g, v| {
            let m = g.constant(Tensor::ones(&[2, 6]));
            g.add_row(m, v)
        })?;
    }

    #[test]
    fn logsumexp_matches_naive(x in prop::collection::vec(-10.0f64..10.0, 1..20)) {
        let naive = x.iter().map(|v| v.exp()).sum::<f64>().ln();
        prop_assert!((log_sum_exp(x.iter().copied()) - naive).abs() < 1e-12);
    }

    #[test]
    fn backward_accumulates(x in values(4)) {
        let mut store = ParamStore::new();
        let id = store.add("x", Tensor::new(vec![4], x).unwrap()).unwrap();
        let mut g = Graph::new();
        let v = g.param(&store, id);
        let t = g.tanh(v);
        let root = g.sum(t);
        g.backward(root, &mut store).unwrap();
        let once = store.get(id).grad().clone();
        g.backward(root, &mut store).unwrap();
        for (a, b) in store.get(id).grad().data().iter().zip(once.data()) {
            prop_assert_eq!(*a, 2.0 * b);
        }
    }
}

fn types_strategy() -> impl Strategy<Value = Vec<String>> {
    (1usize..6).prop_map(|n| (0..n).map(|i| format!("t{i}")).collect())
}

/// Valid BIO2 sequence from random span boundaries.
fn bio2_strategy() -> impl Strategy<Value = (Vec<String>, Vec<FullLabel>)> {
    (types_strategy(), 1usize..14, prop::collection::vec((0.0f64..1.0, 0usize..3, 0usize..8), 14)).prop_map(
        |(types, len, draws)| {
            let mut spans = Vec::new();
            let mut t = 0;
            for (p, extra, ty) in draws {
                if t >= len {
                    break;
                }
                if p < 0.45 {
                    let end = (t + extra).min(len - 1);
                    spans.push(Span { start: t, end, label: TypeLabel::new(&types[ty % types.len()]) });
                    t = end + 1;
                } else {
                    t += 1;
                }
            }
            let seq = render_spans(&spans, len);
            (types, seq)
        },
    )
}

proptest! {
    #[test]
    fn decompose_compose_inverse((_, seq) in bio2_strategy()) {
        for l in &seq {
            let (s, t) = decompose(l);
            prop_assert_eq!(&compose(s, t.clone()).unwrap(), l);
            prop_assert_eq!(s == Seg::O, t.is_outside());
        }
    }

    #[test]
    fn scheme_conversion_keeps_spans((_, seq) in bio2_strategy()) {
        let bioes = bio2_to_bioes(&seq).unwrap();
        prop_assert_eq!(extract_spans(&bioes), extract_spans(&seq));
        prop_assert_eq!(bioes_to_bio2(&bioes), seq);
    }

    #[test]
    fn label_space_size(types in types_strategy()) {
        let n = types.len();
        prop_assert_eq!(LabelSpace::new(Scheme::Bio2, &types).unwrap().num_full(), 2 * n + 1);
        prop_assert_eq!(LabelSpace::new(Scheme::Bioes, &types).unwrap().num_full(), 4 * n + 1);
    }

    #[test]
    fn span_render_is_idempotent((_, seq) in bio2_strategy()) {
        let spans = extract_spans(&seq);
        prop_assert_eq!(extract_spans(&render_spans(&spans, seq.len())), spans);
    }

    #[test]
    fn metric_symmetry_and_ordering((_, gold) in bio2_strategy(), seed in 0u64..1000) {
        // A prediction that keeps, drops or retypes each gold span.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut spans = Vec::new();
        for s in extract_spans(&gold) {
            if rand::Rng::gen_bool(&mut rng, 0.7) {
                let retype = rand::Rng::gen_bool(&mut rng, 0.3);
                spans.push(if retype { Span { label: TypeLabel::new("other"), ..s } } else { s });
            }
        }
        let pred = render_spans(&spans, gold.len());
        let (g, p) = (vec![gold.clone()], vec![pred]);
        let a = span_f1(&g, &p, EvalMode::Full).unwrap();
        let b = span_f1(&p, &g, EvalMode::Full).unwrap();
        prop_assert_eq!(a.precision, b.recall);
        prop_assert_eq!(a.recall, b.precision);
        let seg = span_f1(&g, &p, EvalMode::SegOnly).unwrap();
        prop_assert!(a.tp <= seg.tp);
        prop_assert!(a.tp <= extract_spans(&gold).len());
        prop_assert_eq!(a.tp + a.fn_, extract_spans(&gold).len());
    }
}

fn small_spec(sentences: usize) -> SynthSpec {
    SynthSpec { sentences, sentence_len: (3, 9), ..SynthSpec::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conll_round_trip(seed in 0u64..10_000, keep in 0usize..3) {
        let corpus = generate_synthetic_corpus(&small_spec(12), seed).unwrap();
        let corpus = match keep {
            0 => corpus,
            1 => project_partial(&corpus, Projection::Seg, 1.0, seed, Remainder::Drop).unwrap(),
            _ => project_partial(&corpus, Projection::Typ, 1.0, seed, Remainder::Drop).unwrap(),
        };
        let text = write_conll_string(&corpus);
        let back = read_conll_str(&text, &corpus.label_space, Some(corpus.sentences[0].availability())).unwrap();
        prop_assert_eq!(back.sentences.len(), corpus.sentences.len());
        for (a, b) in back.sentences.iter().zip(&corpus.sentences) {
            prop_assert_eq!(&a.annotation, &b.annotation);
            prop_assert_eq!(a.surfaces().collect::<Vec<_>>(), b.surfaces().collect::<Vec<_>>());
        }
    }

    #[test]
    fn folds_partition_the_corpus(seed in 0u64..10_000, k in 2usize..6, n in 6usize..30) {
        let corpus = generate_synthetic_corpus(&small_spec(n), 1).unwrap();
        let folds = split_folds(&corpus, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut tests: Vec<usize> = folds.iter().flat_map(|f| f.test.sentences.iter().map(|s| s.id)).collect();
        tests.sort_unstable();
        prop_assert_eq!(tests, (0..n).collect::<Vec<_>>());
        for f in &folds {
            prop_assert_eq!(f.train.len() + f.dev.len() + f.test.len(), n);
            for s in &f.test.sentences {
                prop_assert!(!f.train.sentences.iter().chain(&f.dev.sentences).any(|t| t.id == s.id));
            }
        }
        let again = split_folds(&corpus, k, seed).unwrap();
        for (a, b) in folds.iter().zip(&again) {
            prop_assert_eq!(&a.test.sentences, &b.test.sentences);
        }
    }

    #[test]
    fn synthetic_corpora_are_rule_separable(seed in 0u64..10_000, domain in 0u64..3, ntypes in 1usize..5) {
        let spec = SynthSpec {
            types: (0..ntypes).map(|i| format!("k{i}")).collect(),
            domain,
            ..small_spec(20)
        };
        let corpus = generate_synthetic_corpus(&spec, seed).unwrap();
        let lex = SynthLexicon::new(&spec).unwrap();
        let gold = corpus.gold_labels().unwrap();
        let pred: Vec<Vec<FullLabel>> = corpus
            .sentences
            .iter()
            .map(|s| lex.rule_tag(&s.surfaces().collect::<Vec<_>>()))
            .collect();
        let r = span_f1(&gold, &pred, EvalMode::Full).unwrap();
        prop_assert!(r.fp == 0 && r.fn_ == 0);
    }
}

fn potentials(len: usize, k: usize, draws: &[f64]) -> CrfPotentials {
    let em = Tensor::new(vec![len, k], draws[..len * k].to_vec()).unwrap();
    let m = (k + 2) * (k + 2);
    let tr = Tensor::new(vec![k + 2, k + 2], draws[len * k..len * k + m].to_vec()).unwrap();
    CrfPotentials::new(em, tr).unwrap()
}

fn crf_strategy() -> impl Strategy<Value = CrfPotentials> {
    (1usize..=5, 1usize..=4, prop::collection::vec(-2.0f64..2.0, 5 * 4 + 36), any::<bool>()).prop_map(
        |(len, k, draws, coarse)| {
            let draws: Vec<f64> = if coarse { draws.iter().map(|v| v.round()).collect() } else { draws };
            potentials(len, k, &draws)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn crf_matches_enumeration(p in crf_strategy()) {
        prop_assert!((log_partition(&p) - brute_force_log_partition(&p).unwrap()).abs() < 1e-10);
        let (path, score) = viterbi(&p);
        let (best, best_score) = brute_force_argmax(&p).unwrap();
        prop_assert!((score - best_score).abs() < 1e-10);
        prop_assert_eq!(path, best);
    }

    #[test]
    fn crf_normalizes(p in crf_strategy()) {
        let z = log_partition(&p);
        let (len, k) = (p.len(), p.num_labels());
        let mut total = 0.0;
        for code in 0..k.pow(len as u32) {
            let mut c = code;
            let y: Vec<usize> = (0..len).map(|_| { let v = c % k; c /= k; v }).collect();
            total += (score_sequence(&p, &y).unwrap() - z).exp();
            prop_assert!(nll_value(&p, &y).unwrap() >= -1e-12);
        }
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn emission_shift_invariance(p in crf_strategy(), t in 0usize..5, c in -3.0f64..3.0) {
        let t = t % p.len();
        let mut em = p.emissions().clone();
        let k = p.num_labels();
        for j in 0..k {
            em.data_mut()[t * k + j] += c;
        }
        let q = CrfPotentials::new(em, p.transitions().clone()).unwrap();
        prop_assert!((log_partition(&q) - log_partition(&p) - c).abs() < 1e-10);
        // Shifts can reorder exact ties only through rounding, so compare
        // on continuous instances.
        if p.emissions().data().iter().any(|v| v.fract() != 0.0) {
            prop_assert_eq!(viterbi(&q).0, viterbi(&p).0);
        }
    }

    #[test]
    fn single_label_nll_is_zero(len in 1usize..6, draws in prop::collection::vec(-2.0f64..2.0, 20)) {
        let p = potentials(len, 1, &draws);
        prop_assert!(nll_value(&p, &vec![0; len]).unwrap().abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn backward_lstm_direction(xs in values(12), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let p = LstmParams::new(&mut store, "lstm", 3, 2, &mut rng).unwrap();
        let rows: Vec<Vec<f64>> = xs.chunks(3).map(|c| c.to_vec()).collect();
        let reversed: Vec<Vec<f64>> = rows.iter().rev().cloned().collect();
        let mut g = Graph::new();
        let vars = p.vars(&mut g, &store);
        let x = g.constant(Tensor::from_rows(&rows).unwrap());
        let xr = g.constant(Tensor::from_rows(&reversed).unwrap());
        let back = run_lstm(&mut g, &vars, x, true).unwrap();
        let fwd_on_reversed = run_lstm(&mut g, &vars, xr, false).unwrap();
        let (b, f) = (g.value(back).clone(), g.value(fwd_on_reversed).clone());
        for t in 0..4 {
            prop_assert_eq!(b.row_slice(t), f.row_slice(3 - t));
        }
    }

    #[test]
    fn early_stop_waits_for_min_epochs(curve in prop::collection::vec(0.0f64..1.0, 1..200)) {
        let mut stop = EarlyStop::new(30, 120);
        for (i, f1) in curve.iter().enumerate() {
            let (_, decision) = stop.check(i + 1, *f1);
            if i + 1 < 120 {
                prop_assert_eq!(decision, StopDecision::Continue);
            }
        }
    }
}
