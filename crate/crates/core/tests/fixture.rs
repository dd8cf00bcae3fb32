//! The bundled 50-tree sentiment fixture is the output of the synthetic
//! generator; set LEXTREE_WRITE_FIXTURE=1 to rewrite it.

use std::path::PathBuf;

use lextree::diagnostics::{label_sentiment, sentiment_corpus};
use lextree::treebank::{load_dataset, LoadOptions, Task};

pub const FIXTURE_SEED: u64 = 2024;

fn path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/sentiment50.txt")
}

#[test]
fn fixture_matches_generator() {
    let trees = sentiment_corpus(50, FIXTURE_SEED).unwrap();
    let text: String = trees.iter().map(|t| t.to_sexpr() + "\n").collect();
    if std::env::var_os("LEXTREE_WRITE_FIXTURE").is_some() {
        std::fs::write(path(), &text).unwrap();
    }
    assert_eq!(std::fs::read_to_string(path()).unwrap(), text);
}

#[test]
fn fixture_loads_as_five_class_trees_with_consistent_labels() {
    let trees = load_dataset(&path(), Task::Sst5, LoadOptions::default()).unwrap();
    assert_eq!(trees.len(), 50);
    for t in &trees {
        assert!(t.nodes().iter().all(|n| n.label.is_some()));
        // relabeling from scratch reproduces every label
        assert_eq!(&label_sentiment(t).unwrap(), t);
    }
    let roots: std::collections::BTreeSet<usize> = trees.iter().map(|t| t.node(t.root()).label.unwrap()).collect();
    assert!(roots.len() >= 4, "{roots:?}");
}
