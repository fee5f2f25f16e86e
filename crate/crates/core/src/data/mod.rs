//! Corpora, vocabularies, embeddings, fold splits, partial-label projection
//! and the synthetic corpus generator.

mod conll;
mod embeddings;
mod folds;
mod partial;
mod synth;
mod vocab;

pub use conll::{read_conll, read_conll_str, write_conll, write_conll_string};
pub use embeddings::{load_embeddings, parse_embeddings, EmbeddingTable};
pub use folds::{split_folds, Fold};
pub use partial::{project_partial, Projection, Remainder};
pub use synth::{generate_synthetic_corpus, SynthLexicon, SynthSpec};
pub use vocab::{Vocabulary, OOV_ID, PAD_ID};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::labels::{FullLabel, LabelSpace, Seg, TypeLabel};

/// One token; ids are filled in by [`Vocabulary::index_sentence`].
#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub surface: String,
    pub word_id: Option<usize>,
    pub chars: Vec<usize>,
}

impl Token {
    pub fn new(surface: impl Into<String>) -> Self {
        Token {
            surface: surface.into(),
            word_id: None,
            chars: Vec::new(),
        }
    }

    pub fn is_indexed(&self) -> bool {
        self.word_id.is_some() && !self.chars.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Availability {
    Full,
    SegOnly,
    TypeOnly,
    Unlabeled,
}

impl fmt::Display for Availability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Availability::Full => "Full",
            Availability::SegOnly => "SegOnly",
            Availability::TypeOnly => "TypeOnly",
            Availability::Unlabeled => "Unlabeled",
        })
    }
}

impl FromStr for Availability {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Availability::Full),
            "segonly" | "seg" => Ok(Availability::SegOnly),
            "typeonly" | "typ" | "type" => Ok(Availability::TypeOnly),
            "unlabeled" | "none" => Ok(Availability::Unlabeled),
            _ => Err(Error::Config(format!("unknown availability `{s}`"))),
        }
    }
}

/// The labels a sentence carries. A partial annotation stores only the
/// projection it has, so the missing one cannot be read by accident.
#[derive(Clone, Debug, PartialEq)]
pub enum Annotation {
    Full(Vec<FullLabel>),
    SegOnly(Vec<Seg>),
    TypeOnly(Vec<TypeLabel>),
    Unlabeled,
}

impl Annotation {
    pub fn availability(&self) -> Availability {
        match self {
            Annotation::Full(_) => Availability::Full,
            Annotation::SegOnly(_) => Availability::SegOnly,
            Annotation::TypeOnly(_) => Availability::TypeOnly,
            Annotation::Unlabeled => Availability::Unlabeled,
        }
    }

    fn len(&self) -> Option<usize> {
        match self {
            Annotation::Full(l) => Some(l.len()),
            Annotation::SegOnly(l) => Some(l.len()),
            Annotation::TypeOnly(l) => Some(l.len()),
            Annotation::Unlabeled => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedSentence {
    /// Position in the source corpus; used to check that derived subsets
    /// are disjoint.
    pub id: usize,
    pub tokens: Vec<Token>,
    pub annotation: Annotation,
}

impl AnnotatedSentence {
    pub fn new(id: usize, tokens: Vec<Token>, annotation: Annotation) -> Result<Self> {
        if let Some(n) = annotation.len() {
            if n != tokens.len() {
                return Err(Error::Validation(format!(
                    "sentence {id}: {} tokens but {n} labels",
                    tokens.len()
                )));
            }
        }
        Ok(AnnotatedSentence {
            id,
            tokens,
            annotation,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn availability(&self) -> Availability {
        self.annotation.availability()
    }

    pub fn full_labels(&self) -> Option<&[FullLabel]> {
        match &self.annotation {
            Annotation::Full(l) => Some(l),
            _ => None,
        }
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.surface.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub sentences: Vec<AnnotatedSentence>,
    pub label_space: LabelSpace,
    pub provenance: String,
}

impl Corpus {
    pub fn new(label_space: LabelSpace, provenance: impl Into<String>) -> Self {
        Corpus {
            sentences: Vec::new(),
            label_space,
            provenance: provenance.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Same label space and provenance, chosen sentences.
    pub fn with_sentences(&self, sentences: Vec<AnnotatedSentence>, provenance: impl Into<String>) -> Self {
        Corpus {
            sentences,
            label_space: self.label_space.clone(),
            provenance: provenance.into(),
        }
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.sentences
            .iter()
            .all(|s| s.availability() == Availability::Full)
    }

    /// Concatenation of corpora sharing a label space.
    pub fn concat(parts: &[&Corpus], provenance: impl Into<String>) -> Result<Corpus> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Usage("concatenating zero corpora".into()))?;
        let mut out = Corpus::new(first.label_space.clone(), provenance);
        for c in parts {
            if c.label_space.types() != first.label_space.types() {
                return Err(Error::Config("corpora have different type alphabets".into()));
            }
            out.sentences.extend(c.sentences.iter().cloned());
        }
        Ok(out)
    }

    /// Gold full-label sequences; fails unless every sentence is Full.
    pub fn gold_labels(&self) -> Result<Vec<Vec<FullLabel>>> {
        self.sentences
            .iter()
            .map(|s| {
                s.full_labels().map(<[FullLabel]>::to_vec).ok_or_else(|| {
                    Error::Usage(format!("sentence {} is not fully labeled", s.id))
                })
            })
            .collect()
    }
}
