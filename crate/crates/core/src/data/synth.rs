//! Synthetic corpora that are learnable by construction.
//!
//! Every span is written as `opener entity+ trigger`: an opener word marks
//! where the span begins, the span itself consists of entity words, and the
//! trigger word that closes it belongs to the lexicon of the span's type.
//! Everything else is filler. Lexicon words are random letter strings, so
//! their spelling carries no hint of their role, and words are drawn with
//! Zipfian frequencies, so small samples leave part of each lexicon unseen.

use std::collections::HashSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{AnnotatedSentence, Annotation, Corpus, Token};
use crate::error::{Error, Result};
use crate::labels::{FullLabel, LabelSpace, Scheme, Seg, TypeLabel};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub types: Vec<String>,
    pub sentences: usize,
    /// Inclusive range of sentence lengths before spans are placed; a
    /// sentence grows beyond the maximum only when its spans need the room.
    pub sentence_len: (usize, usize),
    pub spans_per_sentence: (usize, usize),
    pub span_len: (usize, usize),
    pub fillers: usize,
    pub entities: usize,
    pub openers: usize,
    pub triggers_per_type: usize,
    /// Exponent of the Zipfian word distribution inside each lexicon.
    pub zipf: f64,
    /// Seed of the trigger lexicons, shared across domains.
    pub lexicon_seed: u64,
    /// Domain tag; different domains share trigger words but not fillers,
    /// entities or openers.
    pub domain: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            types: vec!["positive".into(), "neutral".into(), "negative".into()],
            sentences: 300,
            sentence_len: (6, 12),
            spans_per_sentence: (1, 2),
            span_len: (1, 3),
            fillers: 120,
            entities: 60,
            openers: 8,
            triggers_per_type: 6,
            zipf: 1.0,
            lexicon_seed: 17,
            domain: 0,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic corpus spec: {m}")));
        if self.types.is_empty() {
            return bad("no types");
        }
        if self.sentence_len.0 == 0 || self.sentence_len.0 > self.sentence_len.1 {
            return bad("sentence length range is empty");
        }
        if self.spans_per_sentence.0 > self.spans_per_sentence.1 {
            return bad("span count range is empty");
        }
        if self.span_len.0 == 0 || self.span_len.0 > self.span_len.1 {
            return bad("span length range is empty");
        }
        if self.fillers == 0 {
            return bad("filler lexicon is empty");
        }
        if self.spans_per_sentence.1 > 0
            && (self.entities == 0 || self.openers == 0 || self.triggers_per_type == 0)
        {
            return bad("spans need entity, opener and trigger lexicons");
        }
        if !(self.zipf >= 0.0 && self.zipf.is_finite()) {
            return bad("zipf exponent must be finite and nonnegative");
        }
        Ok(())
    }
}

/// The generator's word lists.
#[derive(Clone, Debug)]
pub struct SynthLexicon {
    pub fillers: Vec<String>,
    pub entities: Vec<String>,
    pub openers: Vec<String>,
    /// One trigger list per type, in type order.
    pub triggers: Vec<Vec<String>>,
    pub types: Vec<String>,
}

fn random_word(rng: &mut impl Rng, taken: &mut HashSet<String>) -> String {
    loop {
        let len = rng.gen_range(3..=7);
        let w: String = (0..len).map(|_| rng.gen_range(b'a'..=b'z') as char).collect();
        if taken.insert(w.clone()) {
            return w;
        }
    }
}

impl SynthLexicon {
    pub fn new(spec: &SynthSpec) -> Result<Self> {
        spec.validate()?;
        let mut taken = HashSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.lexicon_seed);
        let triggers = spec
            .types
            .iter()
            .map(|_| (0..spec.triggers_per_type).map(|_| random_word(&mut rng, &mut taken)).collect())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(
            spec.lexicon_seed ^ spec.domain.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1),
        );
        let mut words = |n| (0..n).map(|_| random_word(&mut rng, &mut taken)).collect::<Vec<_>>();
        let openers = words(spec.openers);
        let entities = words(spec.entities);
        let fillers = words(spec.fillers);
        Ok(SynthLexicon {
            fillers,
            entities,
            openers,
            triggers,
            types: spec.types.clone(),
        })
    }

    fn trigger_type(&self, word: &str) -> Option<usize> {
        self.triggers.iter().position(|ws| ws.iter().any(|w| w == word))
    }

    /// Tags a sentence by reading the cues directly: a run of entity words
    /// right after an opener and right before a trigger is a span of the
    /// trigger's type.
    pub fn rule_tag(&self, words: &[&str]) -> Vec<FullLabel> {
        let entity: HashSet<&str> = self.entities.iter().map(String::as_str).collect();
        let opener: HashSet<&str> = self.openers.iter().map(String::as_str).collect();
        let mut out = vec![FullLabel::outside(); words.len()];
        for start in 1..words.len() {
            if !opener.contains(words[start - 1]) {
                continue;
            }
            let mut end = start;
            while end < words.len() && entity.contains(words[end]) {
                end += 1;
            }
            if end == start || end == words.len() {
                continue;
            }
            if let Some(ty) = self.trigger_type(words[end]) {
                let typ = TypeLabel::Type(self.types[ty].clone());
                for (k, slot) in out[start..end].iter_mut().enumerate() {
                    let seg = if k == 0 { Seg::B } else { Seg::I };
                    *slot = crate::labels::compose(seg, typ.clone()).expect("non-O pair");
                }
            }
        }
        out
    }
}

struct Zipf(WeightedIndex<f64>);

impl Zipf {
    fn new(n: usize, s: f64) -> Option<Self> {
        if n == 0 {
            return None;
        }
        let w: Vec<f64> = (1..=n).map(|r| 1.0 / (r as f64).powf(s)).collect();
        Some(Zipf(WeightedIndex::new(w).expect("positive weights")))
    }

    fn pick<'a>(&self, rng: &mut impl Rng, words: &'a [String]) -> &'a str {
        &words[self.0.sample(rng)]
    }
}

/// Generates `spec.sentences` fully labeled BIO2 sentences.
pub fn generate_synthetic_corpus(spec: &SynthSpec, seed: u64) -> Result<Corpus> {
    let lexicon = SynthLexicon::new(spec)?;
    generate_with_lexicon(spec, &lexicon, seed)
}

pub(crate) fn generate_with_lexicon(spec: &SynthSpec, lex: &SynthLexicon, seed: u64) -> Result<Corpus> {
    spec.validate()?;
    let space = LabelSpace::new(Scheme::Bio2, &spec.types)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let filler = Zipf::new(lex.fillers.len(), spec.zipf).expect("validated");
    let entity = Zipf::new(lex.entities.len(), spec.zipf);
    let opener = Zipf::new(lex.openers.len(), spec.zipf);
    let trigger = Zipf::new(spec.triggers_per_type, spec.zipf);

    enum Item {
        Filler,
        Span(usize, usize),
    }

    let mut corpus = Corpus::new(
        space,
        format!("synthetic(lexicon_seed={}, domain={}, seed={seed})", spec.lexicon_seed, spec.domain),
    );
    for id in 0..spec.sentences {
        let n_spans = rng.gen_range(spec.spans_per_sentence.0..=spec.spans_per_sentence.1);
        let mut items: Vec<Item> = (0..n_spans)
            .map(|_| {
                Item::Span(
                    rng.gen_range(0..spec.types.len()),
                    rng.gen_range(spec.span_len.0..=spec.span_len.1),
                )
            })
            .collect();
        let span_tokens: usize = items
            .iter()
            .map(|i| match i {
                Item::Span(_, l) => l + 2,
                Item::Filler => 1,
            })
            .sum();
        let target = rng.gen_range(spec.sentence_len.0..=spec.sentence_len.1);
        let min_fill = usize::from(span_tokens == 0);
        for _ in 0..target.saturating_sub(span_tokens).max(min_fill) {
            items.push(Item::Filler);
        }
        items.shuffle(&mut rng);

        let mut words = Vec::new();
        let mut labels = Vec::new();
        for item in items {
            match item {
                Item::Filler => {
                    words.push(filler.pick(&mut rng, &lex.fillers).to_string());
                    labels.push(FullLabel::outside());
                }
                Item::Span(ty, len) => {
                    let (entity, opener, trigger) = (
                        entity.as_ref().expect("validated"),
                        opener.as_ref().expect("validated"),
                        trigger.as_ref().expect("validated"),
                    );
                    words.push(opener.pick(&mut rng, &lex.openers).to_string());
                    labels.push(FullLabel::outside());
                    let typ = TypeLabel::Type(spec.types[ty].clone());
                    for k in 0..len {
                        words.push(entity.pick(&mut rng, &lex.entities).to_string());
                        let seg = if k == 0 { Seg::B } else { Seg::I };
                        labels.push(crate::labels::compose(seg, typ.clone())?);
                    }
                    words.push(trigger.pick(&mut rng, &lex.triggers[ty]).to_string());
                    labels.push(FullLabel::outside());
                }
            }
        }
        let tokens = words.into_iter().map(Token::new).collect();
        corpus
            .sentences
            .push(AnnotatedSentence::new(id, tokens, Annotation::Full(labels))?);
    }
    Ok(corpus)
}
