use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Pretrained word vectors plus the fallback vector for unknown words.
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    dim: usize,
    entries: HashMap<String, Tensor>,
    unk: Tensor,
}

impl EmbeddingTable {
    /// Builds a table from in-memory pairs; the unknown vector is their mean.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self> {
        let mut loader = Loader::new(dim, None);
        for (i, (w, v)) in pairs.into_iter().enumerate() {
            loader.insert(i + 1, w, v)?;
        }
        loader.finish()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&Tensor> {
        self.entries.get(word)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn unk_vector(&self) -> &Tensor {
        &self.unk
    }

    /// The table key a word resolves to: itself, else its lowercase form.
    pub fn resolve<'a>(&self, word: &'a str) -> Option<std::borrow::Cow<'a, str>> {
        if self.entries.contains_key(word) {
            return Some(word.into());
        }
        let lower = word.to_lowercase();
        self.entries.contains_key(&lower).then_some(lower.into())
    }

    /// Exact entry, then lowercase entry, then the unknown vector.
    pub fn lookup(&self, word: &str) -> &Tensor {
        self.entries
            .get(word)
            .or_else(|| self.entries.get(&word.to_lowercase()))
            .unwrap_or(&self.unk)
    }
}

struct Loader<'k> {
    dim: usize,
    keep: Option<&'k HashSet<String>>,
    entries: HashMap<String, Tensor>,
    sum: Vec<f64>,
    count: usize,
}

impl<'k> Loader<'k> {
    fn new(dim: usize, keep: Option<&'k HashSet<String>>) -> Self {
        Loader {
            dim,
            keep,
            entries: HashMap::new(),
            sum: vec![0.0; dim],
            count: 0,
        }
    }

    fn insert(&mut self, line: usize, word: String, v: Vec<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::Line {
                line,
                msg: format!("word {word:?} has {} values, expected {}", v.len(), self.dim),
            });
        }
        if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
            return Err(Error::Line {
                line,
                msg: format!("word {word:?} has non-finite value {bad}"),
            });
        }
        self.sum.iter_mut().zip(&v).for_each(|(s, x)| *s += x);
        self.count += 1;
        if self.keep.is_some_and(|k| !k.contains(&word)) {
            return Ok(());
        }
        if self.entries.insert(word.clone(), Tensor::vector(v)).is_some() {
            log::warn!("line {line}: duplicate embedding for {word:?}, keeping the later one");
        }
        Ok(())
    }

    fn finish(self) -> Result<EmbeddingTable> {
        if self.count == 0 {
            return Err(Error::Invalid("no embeddings".into()));
        }
        let n = self.count as f64;
        let unk = Tensor::vector(self.sum.iter().map(|s| s / n).collect());
        Ok(EmbeddingTable {
            dim: self.dim,
            entries: self.entries,
            unk,
        })
    }
}

/// Reads `word v1 ... v_dim` lines.
///
/// When `keep` is given only those words are stored, but the unknown vector
/// is still the mean over every vector in the file.
pub fn read_embeddings<R: BufRead>(reader: R, dim: usize, keep: Option<&HashSet<String>>) -> Result<EmbeddingTable> {
    if dim == 0 {
        return Err(Error::Invalid("embedding dimension must be positive".into()));
    }
    let mut loader = Loader::new(dim, keep);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else {
            continue;
        };
        let values = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Line {
                    line: lineno,
                    msg: format!("bad number {f:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        loader.insert(lineno, word.to_string(), values)?;
    }
    loader.finish()
}

pub fn load_embeddings(path: &Path, dim: usize, keep: Option<&HashSet<String>>) -> Result<EmbeddingTable> {
    let f = File::open(path)?;
    read_embeddings(BufReader::new(f), dim, keep)
}
