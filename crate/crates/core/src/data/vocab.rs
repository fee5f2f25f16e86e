use std::collections::HashMap;

use crate::data::{AnnotatedSentence, Corpus};
use crate::error::{Error, Result};

pub const PAD_ID: usize = 0;
pub const OOV_ID: usize = 1;

/// Word and character indices. Words are keyed case-insensitively;
/// characters keep their case.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    word_ids: HashMap<String, usize>,
    chars: Vec<char>,
    char_ids: HashMap<char, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary {
            words: vec!["<pad>".into(), "<unk>".into()],
            word_ids: HashMap::new(),
            chars: vec!['\0', '\u{fffd}'],
            char_ids: HashMap::new(),
        }
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_corpora(corpora: &[&Corpus]) -> Self {
        let mut v = Vocabulary::new();
        for c in corpora {
            for s in &c.sentences {
                for t in &s.tokens {
                    v.add_word(&t.surface);
                }
            }
        }
        v
    }

    pub fn add_word(&mut self, surface: &str) {
        let key = surface.to_lowercase();
        if !self.word_ids.contains_key(&key) {
            self.word_ids.insert(key.clone(), self.words.len());
            self.words.push(key);
        }
        for ch in surface.chars() {
            if !self.char_ids.contains_key(&ch) {
                self.char_ids.insert(ch, self.chars.len());
                self.chars.push(ch);
            }
        }
    }

    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    pub fn num_chars(&self) -> usize {
        self.chars.len()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn word_id(&self, surface: &str) -> usize {
        self.word_ids
            .get(&surface.to_lowercase())
            .copied()
            .unwrap_or(OOV_ID)
    }

    /// Character ids; an empty surface becomes a single padding character.
    pub fn char_ids(&self, surface: &str) -> Vec<usize> {
        if surface.is_empty() {
            return vec![PAD_ID];
        }
        surface
            .chars()
            .map(|c| self.char_ids.get(&c).copied().unwrap_or(OOV_ID))
            .collect()
    }

    pub fn index_sentence(&self, sentence: &mut AnnotatedSentence) {
        for t in &mut sentence.tokens {
            t.word_id = Some(self.word_id(&t.surface));
            t.chars = self.char_ids(&t.surface);
        }
    }

    pub fn index_corpus(&self, corpus: &mut Corpus) {
        for s in &mut corpus.sentences {
            self.index_sentence(s);
        }
    }

    /// One word per line followed by a line `#chars` and one char per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for w in &self.words[2..] {
            out.push_str(w);
            out.push('\n');
        }
        out.push_str("#chars\n");
        for c in &self.chars[2..] {
            out.push_str(&format!("{}\n", *c as u32));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut v = Vocabulary::new();
        let mut in_chars = false;
        for line in text.lines() {
            if line == "#chars" {
                in_chars = true;
                continue;
            }
            if in_chars {
                let code: u32 = line
                    .parse()
                    .map_err(|_| Error::Checkpoint(format!("bad char code `{line}`")))?;
                let ch = char::from_u32(code)
                    .ok_or_else(|| Error::Checkpoint(format!("bad char code `{line}`")))?;
                v.char_ids.insert(ch, v.chars.len());
                v.chars.push(ch);
            } else {
                v.word_ids.insert(line.to_string(), v.words.len());
                v.words.push(line.to_string());
            }
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Annotation, Token};

    #[test]
    fn reserved_ids_and_case() {
        let mut v = Vocabulary::new();
        v.add_word("Green");
        assert_eq!(v.word_id("green"), 2);
        assert_eq!(v.word_id("GREEN"), 2);
        assert_eq!(v.word_id("book"), OOV_ID);
        let g = v.char_ids("G");
        let lower = v.char_ids("g");
        assert_ne!(g, lower);
        assert_eq!(v.char_ids(""), vec![PAD_ID]);
    }

    #[test]
    fn index_sentence_fills_ids() {
        let mut v = Vocabulary::new();
        v.add_word("a");
        let mut s = AnnotatedSentence::new(0, vec![Token::new("a"), Token::new("b")], Annotation::Unlabeled)
            .unwrap();
        v.index_sentence(&mut s);
        assert!(s.tokens.iter().all(Token::is_indexed));
        assert_eq!(s.tokens[1].word_id, Some(OOV_ID));
    }

    #[test]
    fn text_round_trip() {
        let mut v = Vocabulary::new();
        for w in ["Green", "Book", "ñandú"] {
            v.add_word(w);
        }
        assert_eq!(Vocabulary::from_text(&v.to_text()).unwrap(), v);
    }
}
