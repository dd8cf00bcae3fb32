//! Random trees, gradient-check drivers and a small synthetic sentiment
//! corpus. Shared by the command line, the browser demo and the tests.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{grad_check, GradCheckReport, Graph, DEFAULT_EPS};
use crate::bottomup_tree::HeadStrategy;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, ObjectiveOptions, Supervision, Variant};
use crate::reranker::{LabelInventory, RerankConfig, Reranker};
use crate::treebank::{BinaryTree, NodeId, TreeBuilder, Vocabulary};

/// Random bracketing over `tokens`; `tag` is called once per node
/// (`true` for leaves) in creation order.
pub fn random_tree<R, S, F>(rng: &mut R, tokens: &[S], mut tag: F) -> Result<BinaryTree>
where
    R: Rng + ?Sized,
    S: AsRef<str>,
    F: FnMut(&mut R, bool) -> Option<String>,
{
    if tokens.is_empty() {
        return Err(Error::Invalid("no tokens".into()));
    }
    let mut b = TreeBuilder::new();
    let mut items: Vec<NodeId> = Vec::with_capacity(tokens.len());
    for t in tokens {
        let tg = tag(rng, true);
        items.push(b.leaf(t.as_ref(), tg));
    }
    // merge a random adjacent pair until one node is left
    while items.len() > 1 {
        let i = rng.gen_range(0..items.len() - 1);
        let tg = tag(rng, false);
        let id = b.branch(items[i], items[i + 1], tg);
        items.splice(i..i + 2, [id]);
    }
    b.finish(items[0])
}

const TOY_WORDS: [&str; 5] = ["a", "b", "c", "d", "e"];
const TOY_TAGS: [&str; 3] = ["NP", "VP", "S"];

/// 1..=max_leaves toy tokens with a random class at every node.
pub fn random_labeled_tree<R: Rng + ?Sized>(rng: &mut R, max_leaves: usize, classes: usize) -> Result<BinaryTree> {
    let n = rng.gen_range(1..=max_leaves.max(1));
    let tokens: Vec<&str> = (0..n).map(|_| *TOY_WORDS.choose(rng).expect("non-empty")).collect();
    random_tree(rng, &tokens, |r, _| Some(r.gen_range(0..classes).to_string()))
}

/// Like [`random_labeled_tree`] but with phrase tags on branches only.
pub fn random_tagged_tree<R: Rng + ?Sized>(rng: &mut R, max_leaves: usize) -> Result<BinaryTree> {
    let n = rng.gen_range(1..=max_leaves.max(1));
    let tokens: Vec<&str> = (0..n).map(|_| *TOY_WORDS.choose(rng).expect("non-empty")).collect();
    random_tree(rng, &tokens, |r, leaf| {
        (!leaf).then(|| TOY_TAGS.choose(r).expect("non-empty").to_string())
    })
}

/// Sizes and trial counts for [`gradcheck_model`] and [`gradcheck_reranker`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub out_hidden: usize,
    pub classes: usize,
    pub strategy: HeadStrategy,
    pub trees: usize,
    pub max_leaves: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradcheckSpec {
    fn default() -> Self {
        GradcheckSpec {
            input_dim: 5,
            hidden_dim: 4,
            out_hidden: 3,
            classes: 5,
            strategy: HeadStrategy::Gated,
            trees: 20,
            max_leaves: 5,
            tolerance: 1e-4,
            seed: 1,
        }
    }
}

/// Worst case over all trees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckSummary {
    pub target: String,
    pub trees: usize,
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: Option<String>,
    pub failure: Option<String>,
    /// Draws rejected because a ReLU input sat within the finite
    /// difference step of its kink.
    pub skipped_near_kink: usize,
    pub pass: bool,
}

impl GradcheckSummary {
    fn new(target: String) -> Self {
        GradcheckSummary {
            target,
            trees: 0,
            checked: 0,
            max_rel_err: 0.0,
            worst: None,
            failure: None,
            skipped_near_kink: 0,
            pass: true,
        }
    }

    fn absorb(&mut self, r: GradCheckReport) {
        self.trees += 1;
        self.checked += r.checked;
        if r.max_rel_err > self.max_rel_err || (self.worst.is_none() && r.worst.is_some()) {
            self.max_rel_err = self.max_rel_err.max(r.max_rel_err);
            self.worst = r.worst;
        }
        if r.failure.is_some() && self.failure.is_none() {
            self.failure = r.failure;
        }
        self.pass &= r.pass;
    }
}

fn toy_vocab() -> Vocabulary {
    Vocabulary::build(TOY_WORDS, None)
}

/// Closest a ReLU input may come to zero before a draw is rejected.
pub const KINK_MARGIN: f64 = 10.0 * DEFAULT_EPS;

/// Smallest |input| of the classifier's ReLU over every node of `tree`.
/// Central differences are meaningless when this is below the step.
pub fn relu_margin(model: &Model, tree: &BinaryTree) -> Result<f64> {
    let mut g = Graph::new(model.params());
    let enc = model.encode(&mut g, tree, 0.0, &mut rand::rngs::mock::StepRng::new(0, 0))?;
    let c = model.classifier();
    let (w, b) = (g.param(c.w_hl), g.param(c.b_hl));
    let mut worst = f64::INFINITY;
    for n in 0..tree.len() {
        let h = model.represent(&mut g, tree, &enc, n)?;
        let pre = g.affine(&[(w, h)], Some(b))?;
        worst = g.value(pre).iter().fold(worst, |a, x| a.min(x.abs()));
    }
    Ok(worst)
}

/// Full objective (all-node loss plus a small L2 term) of a fresh model
/// on `spec.trees` random trees.
pub fn gradcheck_model(variant: Variant, spec: &GradcheckSpec) -> Result<GradcheckSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let cfg = ModelConfig::new(variant, spec.input_dim, spec.hidden_dim, spec.out_hidden, spec.classes)
        .with_strategy(spec.strategy);
    let opts = ObjectiveOptions {
        dropout: 0.0,
        l2: 0.01,
        l2_embeddings: true,
        supervision: Supervision::AllNodes,
    };
    let mut summary = GradcheckSummary::new(variant.cli_name().to_string());
    while summary.trees < spec.trees {
        let model = Model::new(cfg.clone(), toy_vocab(), None, &mut rng)?;
        let tree = random_labeled_tree(&mut rng, spec.max_leaves, spec.classes)?;
        if relu_margin(&model, &tree)? <= KINK_MARGIN {
            summary.skipped_near_kink += 1;
            continue;
        }
        let report = grad_check(
            model.params(),
            |g| model.objective(g, &tree, &opts, &mut rand::rngs::mock::StepRng::new(0, 0)),
            DEFAULT_EPS,
            spec.tolerance,
        )?;
        summary.absorb(report);
    }
    Ok(summary)
}

/// Margin loss of a fresh reranker: gold is a random tagged tree and the
/// candidates are rebracketings of the same tokens.
pub fn gradcheck_reranker(spec: &GradcheckSpec) -> Result<GradcheckSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let labels = LabelInventory::new(TOY_TAGS.iter().map(|s| s.to_string()))?;
    let mut cfg = RerankConfig::new(spec.input_dim, spec.hidden_dim, spec.out_hidden);
    cfg.strategy = spec.strategy;
    // a large margin keeps the hinge active so every term is exercised
    cfg.mu = 50.0;
    let mut summary = GradcheckSummary::new("reranker".into());
    for _ in 0..spec.trees {
        let r = Reranker::new(cfg.clone(), toy_vocab(), labels.clone(), None, &mut rng)?;
        let gold = random_tagged_tree(&mut rng, spec.max_leaves.max(2))?;
        let tokens: Vec<String> = gold.tokens().iter().map(|s| s.to_string()).collect();
        let mut cands = vec![gold.clone()];
        for _ in 0..3 {
            cands.push(random_tree(&mut rng, &tokens, |r, leaf| {
                (!leaf).then(|| TOY_TAGS.choose(r).expect("non-empty").to_string())
            })?);
        }
        let report = grad_check(r.params(), |g| r.margin_loss(g, &gold, &cands), DEFAULT_EPS, spec.tolerance)?;
        summary.absorb(report);
    }
    Ok(summary)
}

const POSITIVE: [&str; 6] = ["good", "great", "fun", "charming", "clever", "moving"];
const NEGATIVE: [&str; 6] = ["bad", "dull", "awful", "boring", "weak", "messy"];
const NEUTRAL: [&str; 8] = ["the", "movie", "film", "plot", "cast", "is", "was", "this"];
const NEGATOR: &str = "not";

fn polarity(word: &str) -> i32 {
    if POSITIVE.contains(&word) {
        1
    } else if NEGATIVE.contains(&word) {
        -1
    } else {
        0
    }
}

/// Deterministic five-class sentiment trees in the treebank's bracketed
/// format.
///
/// Every node is labeled by a compositional rule: words carry polarity
/// -1, 0 or +1; a node's score is the sum of its children's clipped to
/// [-2, 2], except that a span starting with a bare "not" leaf flips the
/// sign of its right sibling. Class is score + 2.
pub fn sentiment_corpus(n: usize, seed: u64) -> Result<Vec<BinaryTree>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let len = rng.gen_range(2..=7);
        let tokens: Vec<&str> = (0..len)
            .map(|_| match rng.gen_range(0..10) {
                0..=2 => *POSITIVE.choose(&mut rng).expect("non-empty"),
                3..=5 => *NEGATIVE.choose(&mut rng).expect("non-empty"),
                6 => NEGATOR,
                _ => *NEUTRAL.choose(&mut rng).expect("non-empty"),
            })
            .collect();
        let shape = random_tree(&mut rng, &tokens, |_, _| None)?;
        out.push(label_sentiment(&shape)?);
    }
    Ok(out)
}

/// Applies the compositional rule of [`sentiment_corpus`] to every node.
pub fn label_sentiment(tree: &BinaryTree) -> Result<BinaryTree> {
    let mut score = vec![0i32; tree.len()];
    for id in tree.post_order() {
        let node = tree.node(id);
        score[id] = match node.children() {
            None => polarity(node.token().expect("leaf")),
            Some((l, r)) => {
                if tree.node(l).token() == Some(NEGATOR) {
                    -score[r]
                } else {
                    (score[l] + score[r]).clamp(-2, 2)
                }
            }
        };
    }
    let mut b = TreeBuilder::new();
    let mut ids = vec![0; tree.len()];
    for id in tree.post_order() {
        let tag = Some((score[id] + 2).to_string());
        let node = tree.node(id);
        ids[id] = match node.children() {
            None => b.leaf(node.token().expect("leaf"), tag),
            Some((l, r)) => b.branch(ids[l], ids[r], tag),
        };
    }
    b.finish(ids[tree.root()])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_trees_cover_tokens_in_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let t = random_labeled_tree(&mut rng, 5, 5).unwrap();
            assert!((1..=5).contains(&t.num_leaves()));
            assert_eq!(t.len(), 2 * t.num_leaves() - 1);
            assert!(t.nodes().iter().all(|n| n.label.is_some_and(|l| l < 5)));
        }
        let t = random_tree(&mut rng, &["x", "y", "z"], |_, _| None).unwrap();
        assert_eq!(t.tokens(), vec!["x", "y", "z"]);
    }

    #[test]
    fn sentiment_labels_follow_the_rule() {
        let t = label_sentiment(&BinaryTree::parse("(x (x not) (x (x good) (x fun)))").unwrap()).unwrap();
        assert_eq!(t.to_sexpr(), "(0 (2 not) (4 (3 good) (3 fun)))");
        let t = label_sentiment(&BinaryTree::parse("(x (x bad) (x film))").unwrap()).unwrap();
        assert_eq!(t.node(t.root()).label, Some(1));
        let a = sentiment_corpus(20, 7).unwrap();
        assert_eq!(a, sentiment_corpus(20, 7).unwrap());
        assert_ne!(a, sentiment_corpus(20, 8).unwrap());
    }

    #[test]
    fn drivers_pass_on_small_runs() {
        let spec = GradcheckSpec {
            trees: 2,
            max_leaves: 3,
            ..Default::default()
        };
        for v in [Variant::ConTree, Variant::BiConTree] {
            let s = gradcheck_model(v, &spec).unwrap();
            assert!(s.pass && s.trees == 2 && s.checked > 0, "{s:?}");
        }
        let s = gradcheck_reranker(&spec).unwrap();
        assert!(s.pass, "{s:?}");
    }
}
