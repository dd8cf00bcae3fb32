use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::EmbeddingTable;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";

/// Word/index bijection; index 0 is the unknown token.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    words: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut v = Vocabulary {
            words: Vec::new(),
            index: HashMap::new(),
        };
        v.insert(UNK);
        v
    }

    /// Rebuilds from a word list whose first entry must be [`UNK`].
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        if words.first().map(String::as_str) != Some(UNK) {
            return Err(Error::Invalid(format!("vocabulary must start with {UNK}")));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate vocabulary word {w:?}")));
            }
        }
        Ok(Vocabulary { words, index })
    }

    /// Collects the table-resolved form of every token (the word itself or
    /// its lowercase form); tokens the table cannot resolve fall to unk.
    /// Without a table every distinct token is kept verbatim.
    pub fn build<'a>(tokens: impl IntoIterator<Item = &'a str>, table: Option<&EmbeddingTable>) -> Self {
        let mut v = Vocabulary::new();
        for tok in tokens {
            match table {
                Some(t) => {
                    if let Some(key) = t.resolve(tok) {
                        v.insert(&key);
                    }
                }
                None => {
                    v.insert(tok);
                }
            }
        }
        v
    }

    pub fn insert(&mut self, word: &str) -> usize {
        if let Some(&i) = self.index.get(word) {
            return i;
        }
        self.words.push(word.to_string());
        self.index.insert(word.to_string(), self.words.len() - 1);
        self.words.len() - 1
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Exact match, then lowercase, then 0.
    pub fn resolve(&self, token: &str) -> usize {
        self.get(token)
            .or_else(|| self.get(&token.to_lowercase()))
            .unwrap_or(0)
    }

    /// `[len x dim]` initial lookup matrix. Rows come from `table` when
    /// given (row 0 gets its unknown vector); otherwise uniform(-0.1, 0.1).
    pub fn embedding_matrix<R: Rng + ?Sized>(&self, dim: usize, table: Option<&EmbeddingTable>, rng: &mut R) -> Result<Tensor> {
        let mut values = Vec::with_capacity(self.len() * dim);
        for (i, w) in self.words.iter().enumerate() {
            let row: Option<&[f64]> = match table {
                Some(t) if t.dim() != dim => {
                    return Err(Error::Config(format!(
                        "embedding table has dim {}, model expects {dim}",
                        t.dim()
                    )))
                }
                Some(t) if i == 0 => Some(t.unk_vector().values()),
                Some(t) => t.get(w).map(Tensor::values),
                None => None,
            };
            match row {
                Some(r) => values.extend_from_slice(r),
                None => values.extend((0..dim).map(|_| rng.gen_range(-0.1..0.1))),
            }
        }
        Tensor::matrix(self.len(), dim, values)
    }
}
