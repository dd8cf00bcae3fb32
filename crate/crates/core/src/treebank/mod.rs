//! Trees, question-classification lines, embedding tables and vocabularies.

mod embeddings;
mod trec;
mod tree;
mod vocab;

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use embeddings::{load_embeddings, read_embeddings, EmbeddingTable};
pub use trec::{parse_trec_line, QuestionType};
pub use tree::{BinaryTree, NodeId, NodeKind, TreeBuilder, TreeNode};
pub use vocab::{Vocabulary, UNK};

use crate::error::{Error, Result};

/// Parses a single labeled bracketing.
pub fn parse_sexpr(text: &str) -> Result<BinaryTree> {
    BinaryTree::parse(text)
}

/// Label scheme applied to input trees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Five sentiment classes at every node.
    Sst5,
    /// 0,1 -> 0 and 3,4 -> 1; neutral nodes are unlabeled and sentences with
    /// a neutral root are dropped.
    Sst2,
    /// Six coarse question types at the root only.
    Trec,
    /// Integer node labels in `[0, classes)`.
    Custom { classes: usize },
}

impl Task {
    pub fn num_classes(self) -> usize {
        match self {
            Task::Sst5 => 5,
            Task::Sst2 => 2,
            Task::Trec => QuestionType::ALL.len(),
            Task::Custom { classes } => classes,
        }
    }

    pub fn parse(name: &str, classes: Option<usize>) -> Result<Self> {
        match name {
            "sst5" => Ok(Task::Sst5),
            "sst2" => Ok(Task::Sst2),
            "trec" => Ok(Task::Trec),
            "custom" => match classes {
                Some(c) if c > 0 => Ok(Task::Custom { classes: c }),
                _ => Err(Error::Config("task custom needs a positive class count".into())),
            },
            other => Err(Error::Config(format!(
                "unknown task {other:?} (expected sst5, sst2, trec or custom)"
            ))),
        }
    }

    /// Parses one input line into a labeled tree, or `None` when the
    /// task's protocol drops it.
    pub fn read_line(self, line: &str, allow_flat: bool) -> Result<Option<BinaryTree>> {
        match self {
            Task::Sst5 | Task::Custom { .. } => {
                let tree = parse_sexpr(line)?;
                tree.check_labels(self.num_classes())?;
                Ok(Some(tree))
            }
            Task::Sst2 => {
                let mut tree = parse_sexpr(line)?;
                tree.check_labels(5)?;
                tree.map_labels(|n| match n.label {
                    Some(0 | 1) => Some(0),
                    Some(3 | 4) => Some(1),
                    _ => None,
                });
                Ok(tree.node(tree.root()).label.is_some().then_some(tree))
            }
            Task::Trec => {
                let (class, rest) = trec::split_label(line)?;
                let mut tree = if rest.starts_with('(') {
                    parse_sexpr(rest)?
                } else if allow_flat {
                    let (_, tokens) = parse_trec_line(line)?;
                    flat_tree(&tokens)?
                } else {
                    return Err(Error::Invalid(
                        "TREC line carries no parse tree; tree models need \"LABEL:fine (tree)\" lines".into(),
                    ));
                };
                let root = tree.root();
                tree.map_labels(|_| None);
                tree.node_mut(root).label = Some(class.class_id());
                Ok(Some(tree))
            }
        }
    }
}

/// Right-branching carrier tree for token-only inputs (sequence models).
pub fn flat_tree<S: AsRef<str>>(tokens: &[S]) -> Result<BinaryTree> {
    if tokens.is_empty() {
        return Err(Error::Invalid("no tokens".into()));
    }
    let mut b = TreeBuilder::new();
    let leaves: Vec<NodeId> = tokens.iter().map(|t| b.leaf(t.as_ref(), None)).collect();
    let mut acc = *leaves.last().expect("non-empty");
    for &l in leaves[..leaves.len() - 1].iter().rev() {
        acc = b.branch(l, acc, None);
    }
    b.finish(acc)
}

/// Options for [`read_dataset`].
#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    /// Accept token-only TREC lines (only useful for sequence models).
    pub allow_flat: bool,
    /// Report malformed or non-binary lines as warnings and skip them
    /// instead of failing the whole file.
    pub skip_invalid: bool,
}

/// Reads one example per non-empty line.
pub fn read_dataset<R: BufRead>(reader: R, task: Task, opts: LoadOptions) -> Result<Vec<BinaryTree>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match task.read_line(&line, opts.allow_flat) {
            Ok(Some(t)) => out.push(t),
            Ok(None) => {}
            Err(e) if opts.skip_invalid => log::warn!("line {}: skipped: {e}", i + 1),
            Err(e) => {
                return Err(Error::Line {
                    line: i + 1,
                    msg: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

pub fn load_dataset(path: &Path, task: Task, opts: LoadOptions) -> Result<Vec<BinaryTree>> {
    let f = File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    read_dataset(BufReader::new(f), task, opts)
        .map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sst2_remaps_and_drops_neutral_roots() {
        let t = Task::Sst2
            .read_line("(4 (2 a) (3 (1 b) (2 c)))", false)
            .unwrap()
            .unwrap();
        let labels: Vec<_> = t.post_order().iter().map(|&i| t.node(i).label).collect();
        assert_eq!(labels, vec![None, Some(0), None, Some(1), Some(1)]);
        assert!(Task::Sst2.read_line("(2 (3 a) (1 b))", false).unwrap().is_none());
    }

    #[test]
    fn sst5_rejects_out_of_range_labels() {
        assert!(Task::Sst5.read_line("(7 (2 a) (2 b))", false).is_err());
    }

    #[test]
    fn trec_lines_with_and_without_trees() {
        let t = Task::Trec
            .read_line("NUM:date (SBARQ (WP What) (NN year))", false)
            .unwrap()
            .unwrap();
        assert_eq!(t.node(t.root()).label, Some(QuestionType::Num.class_id()));
        assert!(t.nodes().iter().filter(|n| n.label.is_some()).count() == 1);
        assert!(Task::Trec.read_line("NUM:date What year ?", false).is_err());
        let flat = Task::Trec.read_line("NUM:date What year ?", true).unwrap().unwrap();
        assert_eq!(flat.tokens(), vec!["What", "year", "?"]);
    }

    #[test]
    fn dataset_reports_line_numbers_or_skips() {
        let text = "(3 (2 a) (2 b))\n\n(0 (1 x) (2 y) (3 z))\n";
        let err = read_dataset(text.as_bytes(), Task::Sst5, LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Line { line: 3, .. }), "{err}");
        let opts = LoadOptions {
            skip_invalid: true,
            ..Default::default()
        };
        assert_eq!(read_dataset(text.as_bytes(), Task::Sst5, opts).unwrap().len(), 1);
    }

    #[test]
    fn task_names() {
        assert_eq!(Task::parse("sst5", None).unwrap(), Task::Sst5);
        assert_eq!(Task::parse("custom", Some(3)).unwrap().num_classes(), 3);
        assert!(Task::parse("custom", None).is_err());
        assert!(Task::parse("imdb", None).is_err());
    }
}
