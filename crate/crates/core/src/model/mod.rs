//! Model variants, sentence and phrase representations, the softmax
//! classifier and the training objective.

mod checkpoint;
mod count;
mod optim;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamId, ParamKind, ParamSet, Var};
use crate::bottomup_tree::{encode_up, propagate_heads, HeadGateParams, HeadStrategy, TreeUpOptions, TreeUpParams, UpNodeState};
use crate::error::{Error, Result};
use crate::seq_lstm::{run_both, SeqParams};
use crate::topdown_tree::{encode_down, DownNodeState, TopDownParams};
use crate::treebank::{BinaryTree, EmbeddingTable, NodeId, Vocabulary};

pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use count::{count_params, ParamCount, REFERENCE_COUNTS};
pub use optim::{Adam, AdamConfig};
pub use train::{evaluate, majority_root_accuracy, train, Accuracy, EpochMetrics, TrainConfig, TrainOutcome, Trainer};

/// Encoder architecture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Bidirectional sequential LSTM over the words of each span.
    BiLstm,
    /// Bottom-up tree LSTM without lexical inputs at branches.
    ConTree,
    /// Top-down pass over propagated heads only.
    TopDownConTree,
    /// Bottom-up tree LSTM with head-lexicalized gates.
    ConTreeLex,
    /// Lexicalized bottom-up pass plus the top-down pass.
    BiConTree,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::BiLstm,
        Variant::ConTree,
        Variant::TopDownConTree,
        Variant::ConTreeLex,
        Variant::BiConTree,
    ];

    /// Command-line spelling.
    pub fn cli_name(self) -> &'static str {
        match self {
            Variant::BiLstm => "bilstm",
            Variant::ConTree => "conTree",
            Variant::TopDownConTree => "topdownConTree",
            Variant::ConTreeLex => "conTree+lex",
            Variant::BiConTree => "biconTree",
        }
    }

    pub fn has_up(self) -> bool {
        matches!(self, Variant::ConTree | Variant::ConTreeLex | Variant::BiConTree)
    }

    pub fn has_down(self) -> bool {
        matches!(self, Variant::TopDownConTree | Variant::BiConTree)
    }

    pub fn lexicalized(self) -> bool {
        matches!(self, Variant::ConTreeLex | Variant::BiConTree)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::BiLstm => "BiLSTM",
            Variant::ConTree => "ConTree",
            Variant::TopDownConTree => "TopDownConTree",
            Variant::ConTreeLex => "ConTree+Lex",
            Variant::BiConTree => "BiConTree",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '_'))
            .collect::<String>()
            .to_lowercase();
        match key.as_str() {
            "bilstm" => Ok(Variant::BiLstm),
            "contree" => Ok(Variant::ConTree),
            "topdowncontree" | "topdown" => Ok(Variant::TopDownConTree),
            "contree+lex" | "contreelex" => Ok(Variant::ConTreeLex),
            "bicontree" => Ok(Variant::BiConTree),
            _ => Err(Error::Config(format!(
                "unknown variant {s:?} (bilstm, conTree, topdownConTree, conTree+lex, biconTree)"
            ))),
        }
    }
}

/// Which nodes contribute to the loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Supervision {
    RootOnly,
    /// Every labeled node (unlabeled nodes are skipped).
    AllNodes,
}

/// Architecture and size of a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub strategy: HeadStrategy,
    /// Embedding size `e`.
    pub input_dim: usize,
    /// LSTM state size `d`.
    pub hidden_dim: usize,
    /// Classifier hidden size `l`.
    pub out_hidden: usize,
    pub classes: usize,
    /// Separate head projection for the right forget gate.
    #[serde(default)]
    pub split_forget: bool,
    /// Top-down cell as literally printed (parent head into `g`, parent
    /// cell into `h`).
    #[serde(default)]
    pub literal_topdown: bool,
    /// Start the head gate at zero instead of random values.
    #[serde(default)]
    pub zero_gate: bool,
    /// Exclude the head gate from training.
    #[serde(default)]
    pub freeze_gate: bool,
}

impl ModelConfig {
    pub fn new(variant: Variant, input_dim: usize, hidden_dim: usize, out_hidden: usize, classes: usize) -> Self {
        ModelConfig {
            variant,
            strategy: HeadStrategy::Gated,
            input_dim,
            hidden_dim,
            out_hidden,
            classes,
            split_forget: false,
            literal_topdown: false,
            zero_gate: false,
            freeze_gate: false,
        }
    }

    pub fn with_strategy(mut self, strategy: HeadStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("input_dim", self.input_dim),
            ("hidden_dim", self.hidden_dim),
            ("out_hidden", self.out_hidden),
            ("classes", self.classes),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Head rule actually used. Sequence models have no heads; the plain
    /// bottom-up model has no gate, so G falls back to A there.
    pub fn effective_strategy(&self) -> Option<HeadStrategy> {
        match self.variant {
            Variant::BiLstm => None,
            Variant::ConTree if self.strategy == HeadStrategy::Gated => Some(HeadStrategy::Average),
            _ => Some(self.strategy),
        }
    }

    pub fn has_gate(&self) -> bool {
        self.effective_strategy() == Some(HeadStrategy::Gated)
    }

    /// Classifier input size.
    pub fn repr_dim(&self) -> usize {
        let d = self.hidden_dim;
        match self.variant {
            Variant::BiLstm | Variant::TopDownConTree => 2 * d,
            Variant::ConTree | Variant::ConTreeLex => d,
            Variant::BiConTree => 3 * d,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ClassifierParams {
    pub w_hl: ParamId,
    pub b_hl: ParamId,
    pub w_lp: ParamId,
    pub b_lp: ParamId,
}

impl ClassifierParams {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, prefix: &str, input: usize, hidden: usize, classes: usize, rng: &mut R) -> Result<Self> {
        let w_hl = params.add_matrix(format!("{prefix}.w_hl"), hidden, input, rng)?;
        let b_hl = params.add_bias(format!("{prefix}.b_hl"), hidden)?;
        let w_lp = params.add_matrix(format!("{prefix}.w_lp"), classes, hidden, rng)?;
        let b_lp = params.add_bias(format!("{prefix}.b_lp"), classes)?;
        Ok(ClassifierParams { w_hl, b_hl, w_lp, b_lp })
    }
}

/// Graph handles for one encoded tree.
#[derive(Clone, Debug)]
pub struct EncodedTree {
    /// Word vectors after dropout, in token order.
    pub leaf_inputs: Vec<Var>,
    /// Bottom-up states by node id.
    pub up: Option<Vec<UpNodeState>>,
    /// Head-lexicon vectors by node id.
    pub heads: Option<Vec<Var>>,
    /// Head-gate activations by node id (gated branches only).
    pub gates: Vec<Option<Var>>,
    /// Top-down states by node id.
    pub down: Option<Vec<DownNodeState>>,
}

/// Loss settings for one example.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveOptions {
    pub dropout: f64,
    pub l2: f64,
    pub l2_embeddings: bool,
    pub supervision: Supervision,
}

impl Default for ObjectiveOptions {
    fn default() -> Self {
        ObjectiveOptions {
            dropout: 0.0,
            l2: 0.0,
            l2_embeddings: false,
            supervision: Supervision::AllNodes,
        }
    }
}

/// A configured model: vocabulary, parameters and the ids of each group.
///
/// Forward methods take a [`Graph`] and read parameter values only through
/// it, so the same model can drive graphs over perturbed copies of its
/// parameters.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    vocab: Vocabulary,
    params: ParamSet,
    embed: ParamId,
    seq: Option<(SeqParams, SeqParams)>,
    up: Option<TreeUpParams>,
    down: Option<TopDownParams>,
    classifier: ClassifierParams,
    gate: Option<HeadGateParams>,
}

impl Model {
    /// Allocates every tensor. Random draws happen in a fixed order
    /// (embeddings, encoders, classifier, head gate last), so models that
    /// differ only in the head strategy share all other initial values.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, vocab: Vocabulary, table: Option<&EmbeddingTable>, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (e, d) = (config.input_dim, config.hidden_dim);
        let mut params = ParamSet::new();
        let matrix = vocab.embedding_matrix(e, table, rng)?;
        let embed = params.add("embed", matrix, ParamKind::Embedding)?;

        let seq = if config.variant == Variant::BiLstm {
            let f = SeqParams::new(&mut params, "seq.fwd", e, d, rng)?;
            let b = SeqParams::new(&mut params, "seq.bwd", e, d, rng)?;
            Some((f, b))
        } else {
            None
        };
        let up = if config.variant.has_up() {
            let opts = TreeUpOptions {
                lexicalized: config.variant.lexicalized(),
                split_forget: config.split_forget,
            };
            Some(TreeUpParams::new(&mut params, "up", e, d, opts, rng)?)
        } else {
            None
        };
        let down = if config.variant.has_down() {
            let mut p = TopDownParams::new(&mut params, "down", e, d, rng)?;
            p.literal = config.literal_topdown;
            Some(p)
        } else {
            None
        };
        let classifier = ClassifierParams::new(&mut params, "classifier", config.repr_dim(), config.out_hidden, config.classes, rng)?;
        let gate = if config.has_gate() {
            let gate = HeadGateParams::new(&mut params, "gate", e, config.zero_gate, rng)?;
            if config.freeze_gate {
                for id in gate.ids() {
                    params.set_frozen(id, true);
                }
            }
            Some(gate)
        } else {
            None
        };
        Ok(Model {
            config,
            vocab,
            params,
            embed,
            seq,
            up,
            down,
            classifier,
            gate,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn embedding_id(&self) -> ParamId {
        self.embed
    }

    pub fn gate(&self) -> Option<&HeadGateParams> {
        self.gate.as_ref()
    }

    pub fn up_params(&self) -> Option<&TreeUpParams> {
        self.up.as_ref()
    }

    pub fn down_params(&self) -> Option<&TopDownParams> {
        self.down.as_ref()
    }

    pub fn classifier(&self) -> &ClassifierParams {
        &self.classifier
    }

    /// Embedding rows for the tree's tokens, with inverted dropout when
    /// `dropout > 0`.
    pub fn leaf_inputs(&self, g: &mut Graph<'_>, tree: &BinaryTree, dropout: f64, rng: &mut dyn RngCore) -> Result<Vec<Var>> {
        tree.tokens()
            .iter()
            .map(|tok| {
                let row = g.row(self.embed, self.vocab.resolve(tok))?;
                g.dropout(row, dropout, rng)
            })
            .collect()
    }

    /// Runs every pass the variant needs.
    pub fn encode(&self, g: &mut Graph<'_>, tree: &BinaryTree, dropout: f64, rng: &mut dyn RngCore) -> Result<EncodedTree> {
        let leaf_inputs = self.leaf_inputs(g, tree, dropout, rng)?;
        let strategy = self.config.effective_strategy();
        let mut enc = EncodedTree {
            leaf_inputs,
            up: None,
            heads: None,
            gates: vec![None; tree.len()],
            down: None,
        };
        if let Some(up) = &self.up {
            let states = encode_up(g, tree, &enc.leaf_inputs, up, strategy, self.gate.as_ref(), self.config.variant.lexicalized())?;
            if strategy.is_some() {
                enc.heads = Some(states.iter().map(|s| s.x.expect("heads propagated")).collect());
            }
            enc.gates = states.iter().map(|s| s.z).collect();
            enc.up = Some(states);
        } else if let Some(s) = strategy {
            let heads = propagate_heads(g, tree, &enc.leaf_inputs, s, self.gate.as_ref())?;
            enc.gates = heads.iter().map(|h| h.1).collect();
            enc.heads = Some(heads.into_iter().map(|h| h.0).collect());
        }
        if let Some(down) = &self.down {
            let heads = enc
                .heads
                .as_ref()
                .ok_or_else(|| Error::Config("top-down pass needs head vectors".into()))?;
            enc.down = Some(encode_down(g, tree, heads, down)?);
        }
        Ok(enc)
    }

    /// Representation of the subtree rooted at `node`.
    pub fn represent(&self, g: &mut Graph<'_>, tree: &BinaryTree, enc: &EncodedTree, node: NodeId) -> Result<Var> {
        let missing = || Error::Invalid(format!("encoding lacks a pass required by {}", self.config.variant));
        let leaf_mean = |g: &mut Graph<'_>, down: &[DownNodeState]| {
            let hs: Vec<Var> = tree.leaves_under(node).iter().map(|&l| down[l].h).collect();
            g.mean(&hs)
        };
        match self.config.variant {
            Variant::BiLstm => {
                let (fwd, bwd) = self.seq.as_ref().ok_or_else(missing)?;
                let (s, e) = tree.node(node).span;
                let (fw, bw) = run_both(g, &enc.leaf_inputs[s..e], fwd, bwd)?;
                let last_f = fw.last().expect("non-empty span").h;
                let last_b = bw.last().expect("non-empty span").h;
                g.concat(&[last_f, last_b])
            }
            Variant::ConTree | Variant::ConTreeLex => Ok(enc.up.as_ref().ok_or_else(missing)?[node].h),
            Variant::TopDownConTree => {
                let down = enc.down.as_ref().ok_or_else(missing)?;
                let m = leaf_mean(g, down)?;
                g.concat(&[down[node].h, m])
            }
            Variant::BiConTree => {
                let up = enc.up.as_ref().ok_or_else(missing)?;
                let down = enc.down.as_ref().ok_or_else(missing)?;
                let m = leaf_mean(g, down)?;
                g.concat(&[up[node].h, down[node].h, m])
            }
        }
    }

    /// Log-probabilities over classes: `log_softmax(W_lp relu(W_hl h + b_hl) + b_lp)`.
    pub fn predict(&self, g: &mut Graph<'_>, h: Var) -> Result<Var> {
        let c = &self.classifier;
        let (w_hl, b_hl, w_lp, b_lp) = (g.param(c.w_hl), g.param(c.b_hl), g.param(c.w_lp), g.param(c.b_lp));
        let pre = g.affine(&[(w_hl, h)], Some(b_hl))?;
        let hl = g.relu(pre);
        let logits = g.affine(&[(w_lp, hl)], Some(b_lp))?;
        g.log_softmax(logits)
    }

    pub fn node_log_probs(&self, g: &mut Graph<'_>, tree: &BinaryTree, enc: &EncodedTree, node: NodeId) -> Result<Var> {
        let h = self.represent(g, tree, enc, node)?;
        self.predict(g, h)
    }

    /// Nodes whose gold label enters the loss.
    pub fn supervised_nodes(tree: &BinaryTree, supervision: Supervision) -> Vec<NodeId> {
        match supervision {
            Supervision::RootOnly => vec![tree.root()],
            Supervision::AllNodes => tree
                .post_order()
                .into_iter()
                .filter(|&n| tree.node(n).label.is_some())
                .collect(),
        }
    }

    /// Sum of negative gold log-probabilities over supervised nodes.
    pub fn tree_loss(&self, g: &mut Graph<'_>, tree: &BinaryTree, enc: &EncodedTree, supervision: Supervision) -> Result<Var> {
        let nodes = Self::supervised_nodes(tree, supervision);
        let mut picks = Vec::with_capacity(nodes.len());
        for n in nodes {
            let gold = match tree.node(n).label {
                Some(l) if l < self.config.classes => l,
                Some(l) => {
                    return Err(Error::Invalid(format!(
                        "label {l} out of range for {} classes",
                        self.config.classes
                    )))
                }
                None if n == tree.root() => return Err(Error::Invalid("root has no gold label".into())),
                None => continue,
            };
            let lp = self.node_log_probs(g, tree, enc, n)?;
            picks.push(g.pick(lp, gold)?);
        }
        if picks.is_empty() {
            return Err(Error::Invalid("tree has no labeled nodes".into()));
        }
        let all = g.concat(&picks)?;
        let total = g.sum(all);
        Ok(g.scale(total, -1.0))
    }

    /// `‖θ‖²` over trainable tensors (embeddings only when asked).
    pub fn squared_norm(&self, g: &mut Graph<'_>, include_embeddings: bool) -> Var {
        let ids: Vec<ParamId> = self
            .params
            .ids()
            .filter(|&id| !self.params.is_frozen(id))
            .filter(|&id| include_embeddings || self.params.kind(id) != ParamKind::Embedding)
            .collect();
        let vars: Vec<Var> = ids.into_iter().map(|id| g.param(id)).collect();
        g.sum_squares(&vars)
    }

    /// Loss of one example plus `(λ/2)‖θ‖²`.
    pub fn objective(&self, g: &mut Graph<'_>, tree: &BinaryTree, opts: &ObjectiveOptions, rng: &mut dyn RngCore) -> Result<Var> {
        let enc = self.encode(g, tree, opts.dropout, rng)?;
        let loss = self.tree_loss(g, tree, &enc, opts.supervision)?;
        if opts.l2 == 0.0 {
            return Ok(loss);
        }
        let sq = self.squared_norm(g, opts.l2_embeddings);
        let reg = g.scale(sq, opts.l2 / 2.0);
        g.add(loss, reg)
    }

    /// Predicted class (argmax, first on ties) at each requested node.
    pub fn predict_nodes(&self, tree: &BinaryTree, nodes: &[NodeId]) -> Result<Vec<usize>> {
        let mut g = Graph::new(&self.params);
        let enc = self.encode(&mut g, tree, 0.0, &mut rand::rngs::mock::StepRng::new(0, 0))?;
        nodes
            .iter()
            .map(|&n| {
                let lp = self.node_log_probs(&mut g, tree, &enc, n)?;
                Ok(argmax(g.value(lp)))
            })
            .collect()
    }

    /// Root log-probabilities without dropout.
    pub fn root_log_probs(&self, tree: &BinaryTree) -> Result<Vec<f64>> {
        let mut g = Graph::new(&self.params);
        let enc = self.encode(&mut g, tree, 0.0, &mut rand::rngs::mock::StepRng::new(0, 0))?;
        let lp = self.node_log_probs(&mut g, tree, &enc, tree.root())?;
        Ok(g.value(lp).to_vec())
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, DEFAULT_EPS};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vocab() -> Vocabulary {
        Vocabulary::build(["a", "b", "c", "d"], None)
    }

    fn model(variant: Variant, seed: u64) -> Model {
        let cfg = ModelConfig::new(variant, 5, 4, 3, 5);
        Model::new(cfg, vocab(), None, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn zeroed(variant: Variant) -> Model {
        let mut m = model(variant, 0);
        let ids: Vec<ParamId> = m.params().ids().collect();
        for id in ids {
            if m.params().kind(id) != ParamKind::Embedding {
                m.params_mut().get_mut(id).values_mut().fill(0.0);
            }
        }
        m
    }

    fn no_rng() -> rand::rngs::mock::StepRng {
        rand::rngs::mock::StepRng::new(0, 0)
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.cli_name().parse::<Variant>().unwrap(), v);
            assert_eq!(v.cli_name().to_uppercase().parse::<Variant>().unwrap(), v);
        }
        assert!("treelstm".parse::<Variant>().is_err());
    }

    #[test]
    fn representation_sizes() {
        let tree = BinaryTree::parse("(1 (2 a) (3 b))").unwrap();
        for (v, mult) in [
            (Variant::BiLstm, 2),
            (Variant::ConTree, 1),
            (Variant::TopDownConTree, 2),
            (Variant::ConTreeLex, 1),
            (Variant::BiConTree, 3),
        ] {
            let m = model(v, 1);
            let mut g = Graph::new(m.params());
            let enc = m.encode(&mut g, &tree, 0.0, &mut no_rng()).unwrap();
            for n in 0..tree.len() {
                let h = m.represent(&mut g, &tree, &enc, n).unwrap();
                assert_eq!(g.value(h).len(), 4 * mult, "{v}");
            }
        }
        let cfg = ModelConfig::new(Variant::BiConTree, 300, 150, 128, 5);
        assert_eq!(cfg.repr_dim(), 450);
    }

    #[test]
    fn single_leaf_leaf_mean_is_own_down_state() {
        let m = model(Variant::BiConTree, 2);
        let tree = BinaryTree::parse("(3 a)").unwrap();
        let mut g = Graph::new(m.params());
        let enc = m.encode(&mut g, &tree, 0.0, &mut no_rng()).unwrap();
        let h = m.represent(&mut g, &tree, &enc, 0).unwrap();
        let v = g.value(h);
        assert_eq!(&v[4..8], &v[8..12]);
    }

    #[test]
    fn zero_params_give_zero_representation_and_uniform_output() {
        let m = zeroed(Variant::BiConTree);
        let tree = BinaryTree::parse("(1 (2 a) (3 (0 b) (4 c)))").unwrap();
        let mut g = Graph::new(m.params());
        let enc = m.encode(&mut g, &tree, 0.0, &mut no_rng()).unwrap();
        let h = m.represent(&mut g, &tree, &enc, tree.root()).unwrap();
        assert!(g.value(h).iter().all(|x| *x == 0.0));
        let lp = m.predict(&mut g, h).unwrap();
        for x in g.value(lp) {
            assert!((x - 0.2f64.ln()).abs() < 1e-12);
            assert!((x + 1.60944).abs() < 1e-5);
        }
    }

    #[test]
    fn biased_classifier_predicts_class_zero() {
        let mut m = zeroed(Variant::ConTree);
        let b = m.classifier().b_lp;
        m.params_mut().get_mut(b).values_mut()[0] = 10.0;
        let tree = BinaryTree::parse("(1 (2 a) (3 b))").unwrap();
        assert_eq!(m.predict_nodes(&tree, &[tree.root()]).unwrap(), vec![0]);
    }

    #[test]
    fn zero_params_losses() {
        let m = zeroed(Variant::BiConTree);
        let tree = BinaryTree::parse("(1 (2 a) (3 (0 b) (4 c)))").unwrap();
        let mut g = Graph::new(m.params());
        let enc = m.encode(&mut g, &tree, 0.0, &mut no_rng()).unwrap();
        let root = m.tree_loss(&mut g, &tree, &enc, Supervision::RootOnly).unwrap();
        assert!((g.scalar(root) + 0.2f64.ln()).abs() < 1e-12);
        let all = m.tree_loss(&mut g, &tree, &enc, Supervision::AllNodes).unwrap();
        assert!((g.scalar(all) + 5.0 * 0.2f64.ln()).abs() < 1e-12);
        assert!((g.scalar(all) - 8.0472).abs() < 1e-4);

        let opts = ObjectiveOptions {
            l2: 0.5,
            ..Default::default()
        };
        let mut g = Graph::new(m.params());
        let obj = m.objective(&mut g, &tree, &opts, &mut no_rng()).unwrap();
        assert!((g.scalar(obj) + 5.0 * 0.2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn unlabeled_nodes_are_skipped() {
        let m = zeroed(Variant::ConTree);
        let tree = BinaryTree::parse("(1 (x a) (3 b))").unwrap();
        let mut g = Graph::new(m.params());
        let enc = m.encode(&mut g, &tree, 0.0, &mut no_rng()).unwrap();
        let loss = m.tree_loss(&mut g, &tree, &enc, Supervision::AllNodes).unwrap();
        assert!((g.scalar(loss) + 2.0 * 0.2f64.ln()).abs() < 1e-12);
        let bad = BinaryTree::parse("(9 (1 a) (3 b))").unwrap();
        assert!(m.tree_loss(&mut g, &bad, &enc, Supervision::RootOnly).is_err());
    }

    #[test]
    fn full_objective_gradients_every_variant() {
        let tree = BinaryTree::parse("(1 (2 (0 a) (4 b)) (3 (0 c) (4 d)))").unwrap();
        let opts = ObjectiveOptions {
            l2: 0.01,
            ..Default::default()
        };
        for v in Variant::ALL {
            let m = model(v, 11);
            let report = grad_check(m.params(), |g| m.objective(g, &tree, &opts, &mut no_rng()), DEFAULT_EPS, 1e-4).unwrap();
            assert!(report.pass, "{v}: {report:?}");
        }
    }

    #[test]
    fn gate_is_allocated_last_and_only_when_gated() {
        let a = Model::new(
            ModelConfig::new(Variant::ConTreeLex, 5, 4, 3, 5).with_strategy(HeadStrategy::Average),
            vocab(),
            None,
            &mut ChaCha8Rng::seed_from_u64(3),
        )
        .unwrap();
        let g = model(Variant::ConTreeLex, 3);
        assert!(a.gate().is_none());
        assert_eq!(g.params().len(), a.params().len() + 3);
        for id in a.params().ids() {
            assert_eq!(a.params().name(id), g.params().name(id));
            assert_eq!(a.params().get(id).values(), g.params().get(id).values());
        }
        assert!(model(Variant::ConTree, 0).gate().is_none());
    }

    #[test]
    fn argmax_prefers_first() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0]), 0);
    }
}
