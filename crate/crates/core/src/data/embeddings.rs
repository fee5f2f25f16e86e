use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Pretrained word vectors keyed by lowercased word.
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
    oov: Vec<f64>,
}

impl EmbeddingTable {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    /// The word's vector, or the shared OOV vector.
    pub fn lookup(&self, word: &str) -> &[f64] {
        self.get(word).unwrap_or(&self.oov)
    }

    pub fn oov(&self) -> &[f64] {
        &self.oov
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.vectors.keys().map(String::as_str)
    }
}

/// Uniform in `±√(3/d)`.
pub(crate) fn uniform_vector(rng: &mut impl Rng, dimension: usize) -> Vec<f64> {
    let bound = (3.0 / dimension as f64).sqrt();
    (0..dimension).map(|_| rng.gen_range(-bound..=bound)).collect()
}

pub fn parse_embeddings(text: &str, dimension: usize, seed: u64) -> Result<EmbeddingTable> {
    if dimension == 0 {
        return Err(Error::Config("embedding dimension must be positive".into()));
    }
    let mut vectors = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let values = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    line: i + 1,
                    message: format!("`{f}` is not a number"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != dimension {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected {dimension} values, found {}", values.len()),
            });
        }
        vectors.entry(word.to_lowercase()).or_insert(values);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(EmbeddingTable {
        dimension,
        vectors,
        oov: uniform_vector(&mut rng, dimension),
    })
}

pub fn load_embeddings(path: &Path, dimension: usize, seed: u64) -> Result<EmbeddingTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text, dimension, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_read() {
        let t = parse_embeddings("the 0.1 0.2\n", 2, 0).unwrap();
        assert_eq!(t.lookup("the"), &[0.1, 0.2]);
        assert_eq!(t.lookup("The"), &[0.1, 0.2]);
    }

    #[test]
    fn oov_is_stable_and_bounded() {
        let t = parse_embeddings("the 0.1 0.2\n", 2, 42).unwrap();
        let a = t.lookup("absent").to_vec();
        assert_eq!(a, t.lookup("also-absent"));
        let again = parse_embeddings("the 0.1 0.2\n", 2, 42).unwrap();
        assert_eq!(again.oov(), &a[..]);
        let bound = (3.0f64 / 2.0).sqrt();
        assert!(a.iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn wrong_column_count_cites_line() {
        let mut text = String::new();
        for i in 0..6 {
            text.push_str(&format!("w{i} 0.1 0.2\n"));
        }
        text.push_str("bad 0.1\n");
        match parse_embeddings(&text, 2, 0) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("{other:?}"),
        }
    }
}
