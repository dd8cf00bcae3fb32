//! Post-hoc analyses: head words recovered from head-lexicon vectors,
//! bucketed accuracy tables and a head-strategy comparison harness.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::bottomup_tree::HeadStrategy;
use crate::error::{Error, Result};
use crate::model::{evaluate, train, Model, TrainConfig};
use crate::treebank::{BinaryTree, EmbeddingTable, NodeId, NodeKind, Vocabulary};

/// Negation cues matched against lowercased tokens.
pub const NEGATION_CUES: [&str; 4] = ["not", "no", "none", "n't"];

/// Published root accuracies (%) per head strategy, shown next to ours.
pub const REFERENCE_STRATEGY_ACCURACY: [(HeadStrategy, f64); 4] = [
    (HeadStrategy::Left, 51.1),
    (HeadStrategy::Right, 51.6),
    (HeadStrategy::Average, 51.8),
    (HeadStrategy::Gated, 53.5),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Child {
    Left,
    Right,
}

/// Head decision at one node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeHead {
    /// `None` at leaves.
    pub chosen: Option<Child>,
    /// Cosine similarity of the node's head vector with each child's.
    pub sim: Option<(f64, f64)>,
    /// Leaf whose token heads this node.
    pub head_leaf: NodeId,
    pub head: String,
    /// Both similarities were equal; the left child was taken.
    pub tie: bool,
    /// A zero-norm vector was involved; its similarity counted as 0.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadAssignment {
    pub nodes: Vec<NodeHead>,
}

/// Cosine similarity; `None` when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (na > 0.0 && nb > 0.0).then(|| dot / (na * nb))
}

/// Per-node head vectors and, where a gate exists, its activations.
pub type HeadVectors = (Vec<Vec<f64>>, Vec<Option<Vec<f64>>>);

/// Head vectors and gate activations of every node, without dropout.
pub fn head_vectors(model: &Model, tree: &BinaryTree) -> Result<HeadVectors> {
    let mut g = Graph::new(model.params());
    let enc = model.encode(&mut g, tree, 0.0, &mut rand::rngs::mock::StepRng::new(0, 0))?;
    let heads = enc
        .heads
        .as_ref()
        .ok_or_else(|| Error::Config(format!("{} does not propagate head vectors", model.config().variant)))?;
    let xs = heads.iter().map(|&v| g.value(v).to_vec()).collect();
    let zs = enc.gates.iter().map(|z| z.map(|v| g.value(v).to_vec())).collect();
    Ok((xs, zs))
}

/// Picks, at every branch, the child whose head vector is closest in
/// cosine to the branch's own, then resolves head words bottom-up.
pub fn extract_heads(tree: &BinaryTree, heads: &[Vec<f64>]) -> Result<HeadAssignment> {
    if heads.len() != tree.len() {
        return Err(Error::Invalid(format!(
            "{} head vectors for {} nodes",
            heads.len(),
            tree.len()
        )));
    }
    let mut out: Vec<Option<NodeHead>> = vec![None; tree.len()];
    for id in tree.post_order() {
        let node = tree.node(id);
        let head = match &node.kind {
            NodeKind::Leaf { token } => NodeHead {
                chosen: None,
                sim: None,
                head_leaf: id,
                head: token.clone(),
                tie: false,
                degenerate: false,
            },
            NodeKind::Branch { left, right } => {
                let l = cosine(&heads[id], &heads[*left]);
                let r = cosine(&heads[id], &heads[*right]);
                let degenerate = l.is_none() || r.is_none();
                if degenerate {
                    log::warn!("node {id}: zero-norm head vector, similarity taken as 0");
                }
                let (sl, sr) = (l.unwrap_or(0.0), r.unwrap_or(0.0));
                let tie = sl == sr;
                if tie {
                    log::debug!("node {id}: similarity tie, choosing the left child");
                }
                let (chosen, child) = if sr > sl { (Child::Right, *right) } else { (Child::Left, *left) };
                let c = out[child].as_ref().expect("children first");
                NodeHead {
                    chosen: Some(chosen),
                    sim: Some((sl, sr)),
                    head_leaf: c.head_leaf,
                    head: c.head.clone(),
                    tie,
                    degenerate,
                }
            }
        };
        out[id] = Some(head);
    }
    Ok(HeadAssignment {
        nodes: out.into_iter().map(|h| h.expect("all nodes")).collect(),
    })
}

/// One line per node, indented by depth:
/// `(label) words ⟨head⟩ simL=.. simR=..`.
pub fn render_heads(tree: &BinaryTree, heads: &HeadAssignment) -> String {
    let tokens = tree.tokens();
    let mut out = String::new();
    let mut stack = vec![(tree.root(), 0usize)];
    while let Some((id, depth)) = stack.pop() {
        let node = tree.node(id);
        let h = &heads.nodes[id];
        let (s, e) = node.span;
        let tag = node.tag.as_deref().unwrap_or("-");
        let _ = write!(out, "{}({tag}) {} ⟨{}⟩", "  ".repeat(depth), tokens[s..e].join(" "), h.head);
        if let Some((l, r)) = h.sim {
            let _ = write!(out, " simL={l:.4} simR={r:.4}");
            if h.tie {
                out.push_str(" tie");
            }
        }
        out.push('\n');
        if let Some((l, r)) = node.children() {
            stack.push((r, depth + 1));
            stack.push((l, depth + 1));
        }
    }
    out
}

/// Machine-readable per-node record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadRecord {
    pub span: (usize, usize),
    pub label: Option<String>,
    pub head: String,
    #[serde(rename = "simL")]
    pub sim_l: Option<f64>,
    #[serde(rename = "simR")]
    pub sim_r: Option<f64>,
}

pub fn head_records(tree: &BinaryTree, heads: &HeadAssignment) -> Vec<HeadRecord> {
    tree.pre_order()
        .into_iter()
        .map(|id| {
            let node = tree.node(id);
            let h = &heads.nodes[id];
            HeadRecord {
                span: node.span,
                label: node.tag.clone(),
                head: h.head.clone(),
                sim_l: h.sim.map(|s| s.0),
                sim_r: h.sim.map(|s| s.1),
            }
        })
        .collect()
}

/// Gold and predicted root class of one sentence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub tokens: Vec<String>,
    pub gold: usize,
    pub pred: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bucketing {
    /// Sentence length in buckets `(0,10]`, `(10,20]`, ...
    Length,
    /// Gold class.
    Class,
    /// Whether any negation cue occurs.
    Negation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub name: String,
    pub correct: usize,
    pub total: usize,
}

impl Bucket {
    fn new(name: impl Into<String>) -> Self {
        Bucket {
            name: name.into(),
            correct: 0,
            total: 0,
        }
    }

    /// `None` for an empty bucket.
    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

pub fn has_negation<S: AsRef<str>>(tokens: &[S]) -> bool {
    tokens
        .iter()
        .any(|t| NEGATION_CUES.contains(&t.as_ref().to_lowercase().as_str()))
}

/// Root accuracy per bucket. Length buckets run up to the longest
/// sentence (empty ones included); class buckets cover `0..classes`.
pub fn bucket_accuracy(items: &[Outcome], bucketing: Bucketing, classes: usize) -> Vec<Bucket> {
    let mut buckets: Vec<Bucket> = match bucketing {
        Bucketing::Length => {
            let max = items.iter().map(|o| o.tokens.len()).max().unwrap_or(0);
            (0..max.div_ceil(10))
                .map(|b| Bucket::new(format!("({},{}]", b * 10, b * 10 + 10)))
                .collect()
        }
        Bucketing::Class => (0..classes).map(|c| Bucket::new(format!("class {c}"))).collect(),
        Bucketing::Negation => vec![Bucket::new("negation"), Bucket::new("no negation")],
    };
    for o in items {
        let idx = match bucketing {
            Bucketing::Length => o.tokens.len().max(1).saturating_sub(1) / 10,
            Bucketing::Class => o.gold,
            Bucketing::Negation => usize::from(!has_negation(&o.tokens)),
        };
        if idx >= buckets.len() {
            buckets.resize_with(idx + 1, || Bucket::new(format!("class {idx}")));
        }
        let b = &mut buckets[idx];
        b.total += 1;
        b.correct += usize::from(o.gold == o.pred);
    }
    buckets
}

pub fn format_buckets(buckets: &[Bucket]) -> String {
    let width = buckets.iter().map(|b| b.name.len()).max().unwrap_or(6).max(6);
    let mut out = format!("{:<width$}  {:>6}  {:>8}\n", "bucket", "n", "accuracy");
    for b in buckets {
        let acc = b.accuracy().map_or("n/a".to_string(), |a| format!("{:.2}", 100.0 * a));
        let _ = writeln!(out, "{:<width$}  {:>6}  {:>8}", b.name, b.total, acc);
    }
    out
}

/// Root predictions for `data` as bucketable outcomes.
pub fn root_outcomes(model: &Model, data: &[BinaryTree]) -> Result<Vec<Outcome>> {
    data.iter()
        .filter(|t| t.node(t.root()).label.is_some())
        .map(|t| {
            let pred = model.predict_nodes(t, &[t.root()])?[0];
            Ok(Outcome {
                tokens: t.tokens().iter().map(|s| s.to_string()).collect(),
                gold: t.node(t.root()).label.expect("filtered"),
                pred,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub strategy: HeadStrategy,
    pub seed: u64,
    pub dev_root_acc: f64,
    pub test_root_acc: Option<f64>,
    /// Published accuracy in percent.
    pub reference: f64,
}

/// Trains one model per head strategy under the same protocol (same
/// seeds, same example order) and reports root accuracies.
pub fn compare_strategies(
    base: &TrainConfig,
    vocab: &Vocabulary,
    table: Option<&EmbeddingTable>,
    train_set: &[BinaryTree],
    dev_set: &[BinaryTree],
    test_set: Option<&[BinaryTree]>,
) -> Result<Vec<StrategyRow>> {
    REFERENCE_STRATEGY_ACCURACY
        .iter()
        .map(|&(strategy, reference)| {
            let mut cfg = base.clone();
            cfg.model.strategy = strategy;
            let out = train(&cfg, vocab, table, train_set, dev_set, |_| {})?;
            let test_root_acc = match test_set {
                Some(t) => Some(evaluate(&out.model, t)?.root()),
                None => None,
            };
            Ok(StrategyRow {
                strategy,
                seed: out.seed,
                dev_root_acc: out.dev.root(),
                test_root_acc,
                reference,
            })
        })
        .collect()
}

pub fn format_comparison(rows: &[StrategyRow]) -> String {
    let mut out = String::from("strategy  dev_root  test_root  reference\n");
    for r in rows {
        let test = r.test_root_acc.map_or("n/a".to_string(), |a| format!("{:.2}", 100.0 * a));
        let _ = writeln!(
            out,
            "{:<8}  {:>8.2}  {:>9}  {:>9.1}",
            r.strategy.code(),
            100.0 * r.dev_root_acc,
            test,
            r.reference
        );
    }
    out
}
