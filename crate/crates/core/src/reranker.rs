//! Constituent scorer for k-best parse reranking.
//!
//! A lexicalized bottom-up tree LSTM encodes each candidate tree; every
//! branch node is scored by how well its label is predicted from its two
//! children's states and its own head vector. A tree's score is the sum
//! over its branch nodes, interpolated with the base parser's score.

use std::collections::BTreeSet;
use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamId, ParamKind, ParamSet, Var};
use crate::bottomup_tree::{encode_up, HeadGateParams, HeadStrategy, TreeUpOptions, TreeUpParams, UpNodeState};
use crate::error::{Error, Result};
use crate::model::{Adam, AdamConfig};
use crate::treebank::{BinaryTree, EmbeddingTable, NodeKind, Vocabulary};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RerankConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Size `l_s` of the scoring layer.
    pub score_hidden: usize,
    pub strategy: HeadStrategy,
    /// Cost per wrong bracket in the margin.
    pub mu: f64,
    /// Weight of the model score in the interpolation.
    pub alpha: f64,
}

impl RerankConfig {
    pub fn new(input_dim: usize, hidden_dim: usize, score_hidden: usize) -> Self {
        RerankConfig {
            input_dim,
            hidden_dim,
            score_hidden,
            strategy: HeadStrategy::Gated,
            mu: 0.1,
            alpha: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.score_hidden == 0 {
            return Err(Error::Config("reranker dimensions must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.mu.is_nan() || self.mu < 0.0 {
            return Err(Error::Config(format!("mu {} must be non-negative", self.mu)));
        }
        Ok(())
    }
}

/// Sorted set of constituent labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelInventory {
    labels: Vec<String>,
}

impl LabelInventory {
    pub fn new(labels: impl IntoIterator<Item = String>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        if labels.is_empty() {
            return Err(Error::Invalid("empty label inventory".into()));
        }
        Ok(LabelInventory { labels })
    }

    /// Every branch tag in `trees`.
    pub fn from_trees<'a>(trees: impl IntoIterator<Item = &'a BinaryTree>) -> Result<Self> {
        let mut tags = Vec::new();
        for t in trees {
            for id in t.branches() {
                tags.push(branch_tag(t, id)?.to_string());
            }
        }
        Self::new(tags)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

fn branch_tag(tree: &BinaryTree, id: usize) -> Result<&str> {
    tree.node(id)
        .tag
        .as_deref()
        .ok_or_else(|| Error::Invalid(format!("branch over span {:?} has no label", tree.node(id).span)))
}

#[derive(Clone, Debug)]
pub struct ScoreParams {
    pub w_l: ParamId,
    pub w_r: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
    pub w_out: ParamId,
}

/// Scorer parameters together with its encoder.
#[derive(Clone, Debug)]
pub struct Reranker {
    config: RerankConfig,
    vocab: Vocabulary,
    labels: LabelInventory,
    params: ParamSet,
    embed: ParamId,
    up: TreeUpParams,
    score: ScoreParams,
    gate: Option<HeadGateParams>,
}

impl Reranker {
    pub fn new<R: Rng + ?Sized>(
        config: RerankConfig,
        vocab: Vocabulary,
        labels: LabelInventory,
        table: Option<&EmbeddingTable>,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let (e, d, ls) = (config.input_dim, config.hidden_dim, config.score_hidden);
        let mut params = ParamSet::new();
        let embed = params.add("embed", vocab.embedding_matrix(e, table, rng)?, ParamKind::Embedding)?;
        let opts = TreeUpOptions {
            lexicalized: true,
            split_forget: false,
        };
        let up = TreeUpParams::new(&mut params, "up", e, d, opts, rng)?;
        let score = ScoreParams {
            w_l: params.add_matrix("score.w_l", ls, d, rng)?,
            w_r: params.add_matrix("score.w_r", ls, d, rng)?,
            w_h: params.add_matrix("score.w_h", ls, e, rng)?,
            b: params.add_bias("score.b", ls)?,
            w_out: params.add_matrix("score.w_out", labels.len(), ls, rng)?,
        };
        let gate = if config.strategy == HeadStrategy::Gated {
            Some(HeadGateParams::new(&mut params, "gate", e, false, rng)?)
        } else {
            None
        };
        Ok(Reranker {
            config,
            vocab,
            labels,
            params,
            embed,
            up,
            score,
            gate,
        })
    }

    pub fn config(&self) -> &RerankConfig {
        &self.config
    }

    pub fn labels(&self) -> &LabelInventory {
        &self.labels
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn score_params(&self) -> &ScoreParams {
        &self.score
    }

    pub fn encode(&self, g: &mut Graph<'_>, tree: &BinaryTree) -> Result<Vec<UpNodeState>> {
        let xs = tree
            .tokens()
            .iter()
            .map(|t| g.row(self.embed, self.vocab.resolve(t)))
            .collect::<Result<Vec<_>>>()?;
        encode_up(g, tree, &xs, &self.up, Some(self.config.strategy), self.gate.as_ref(), true)
    }

    /// `log_softmax(W_out relu(W_l n_b + W_r n_c + W_h h_a + b))[label]`.
    pub fn node_score(&self, g: &mut Graph<'_>, label: &str, n_b: Var, n_c: Var, h_a: Var) -> Result<Var> {
        let id = self
            .labels
            .id(label)
            .ok_or_else(|| Error::Invalid(format!("unknown constituent label {label:?}")))?;
        let s = &self.score;
        let (wl, wr, wh, b, wo) = (g.param(s.w_l), g.param(s.w_r), g.param(s.w_h), g.param(s.b), g.param(s.w_out));
        let pre = g.affine(&[(wl, n_b), (wr, n_c), (wh, h_a)], Some(b))?;
        let o = g.relu(pre);
        let logits = g.affine(&[(wo, o)], None)?;
        let lp = g.log_softmax(logits)?;
        g.pick(lp, id)
    }

    /// Sum of node scores over branch nodes (0 for a single word).
    pub fn tree_score(&self, g: &mut Graph<'_>, tree: &BinaryTree) -> Result<Var> {
        let states = self.encode(g, tree)?;
        let mut scores = Vec::new();
        for id in tree.branches() {
            let NodeKind::Branch { left, right } = tree.node(id).kind else {
                unreachable!("branches() yields branch nodes")
            };
            let head = states[id].x.expect("heads are propagated");
            scores.push(self.node_score(g, branch_tag(tree, id)?, states[left].h, states[right].h, head)?);
        }
        if scores.is_empty() {
            return Ok(g.vector(vec![0.0]));
        }
        let all = g.concat(&scores)?;
        Ok(g.sum(all))
    }

    pub fn score(&self, tree: &BinaryTree) -> Result<f64> {
        let mut g = Graph::new(&self.params);
        let s = self.tree_score(&mut g, tree)?;
        Ok(g.scalar(s))
    }

    /// Structured hinge `max(0, max_y [f(y) + Δ(y)] − f(gold))` over
    /// candidates whose bracketing differs from gold, where `Δ(y)` is `mu`
    /// times the number of brackets of `y` missing from gold.
    pub fn margin_loss(&self, g: &mut Graph<'_>, gold: &BinaryTree, candidates: &[BinaryTree]) -> Result<Var> {
        if candidates.is_empty() {
            return Err(Error::Invalid("empty candidate list".into()));
        }
        let gold_brackets = gold.brackets();
        let f_gold = self.tree_score(g, gold)?;
        let mut best: Option<(f64, Var)> = None;
        for y in candidates {
            let yb = y.brackets();
            if yb == gold_brackets {
                continue;
            }
            let cost = self.config.mu * yb.difference(&gold_brackets).count() as f64;
            let f = self.tree_score(g, y)?;
            let c = g.vector(vec![cost]);
            let v = g.add(f, c)?;
            let val = g.scalar(v);
            if best.is_none_or(|(b, _)| val > b) {
                best = Some((val, v));
            }
        }
        match best {
            Some((val, v)) if val > g.scalar(f_gold) => g.sub(v, f_gold),
            _ => Ok(g.vector(vec![0.0])),
        }
    }
}

/// A candidate with its scores.
#[derive(Clone, Debug)]
pub struct ScoredTree {
    pub tree: BinaryTree,
    pub model_score: f64,
    pub base_score: f64,
}

impl ScoredTree {
    pub fn combined(&self, alpha: f64) -> f64 {
        alpha * self.model_score + (1.0 - alpha) * self.base_score
    }
}

/// Index of the best combined score; ties go to the higher base score,
/// then to the earlier candidate.
pub fn rerank(candidates: &[ScoredTree], alpha: f64) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::Invalid("empty candidate list".into()));
    }
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate().skip(1) {
        let (a, b) = (c.combined(alpha), candidates[best].combined(alpha));
        if a > b || (a == b && c.base_score > candidates[best].base_score) {
            best = i;
        }
    }
    Ok(best)
}

/// Labeled-bracket precision, recall and F1 over branch nodes.
pub fn bracket_prf(pred: &BinaryTree, gold: &BinaryTree) -> (f64, f64, f64) {
    let p = pred.brackets();
    let g = gold.brackets();
    let matched = p.intersection(&g).count() as f64;
    if p.is_empty() && g.is_empty() {
        return (1.0, 1.0, 1.0);
    }
    let precision = if p.is_empty() { 0.0 } else { matched / p.len() as f64 };
    let recall = if g.is_empty() { 0.0 } else { matched / g.len() as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// Candidate with the highest F1 against `gold` (ties as in [`rerank`]).
pub fn oracle(candidates: &[ScoredTree], gold: &BinaryTree) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::Invalid("empty candidate list".into()));
    }
    let f1: Vec<f64> = candidates.iter().map(|c| bracket_prf(&c.tree, gold).2).collect();
    let mut best = 0;
    for i in 1..candidates.len() {
        if f1[i] > f1[best] || (f1[i] == f1[best] && candidates[i].base_score > candidates[best].base_score) {
            best = i;
        }
    }
    Ok(best)
}

/// Reads blocks of `base_score<TAB>tree` lines separated by blank lines.
pub fn read_candidates<R: BufRead>(reader: R) -> Result<Vec<Vec<(f64, BinaryTree)>>> {
    let mut out = Vec::new();
    let mut block = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            if !block.is_empty() {
                out.push(std::mem::take(&mut block));
            }
            continue;
        }
        let err = |msg: String| Error::Line { line: i + 1, msg };
        let (score, tree) = line
            .split_once('\t')
            .ok_or_else(|| err("expected \"base_score<TAB>tree\"".into()))?;
        let score: f64 = score
            .trim()
            .parse()
            .map_err(|_| err(format!("bad base score {score:?}")))?;
        let tree = BinaryTree::parse(tree).map_err(|e| err(e.to_string()))?;
        block.push((score, tree));
    }
    if !block.is_empty() {
        out.push(block);
    }
    Ok(out)
}

/// Per-example Adam training of the margin loss.
pub struct RerankTrainer {
    reranker: Reranker,
    adam: Adam,
    rng: ChaCha8Rng,
}

impl RerankTrainer {
    pub fn new(reranker: Reranker, adam: AdamConfig, seed: u64) -> Self {
        RerankTrainer {
            adam: Adam::new(adam, reranker.params()),
            reranker,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn reranker(&self) -> &Reranker {
        &self.reranker
    }

    pub fn into_reranker(self) -> Reranker {
        self.reranker
    }

    /// One shuffled pass; returns the mean margin loss.
    pub fn epoch(&mut self, data: &[(BinaryTree, Vec<BinaryTree>)]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Invalid("no reranking examples".into()));
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng as &mut dyn RngCore);
        let mut total = 0.0;
        for i in order {
            let (gold, cands) = &data[i];
            let (loss, grads) = {
                let mut g = Graph::new(self.reranker.params());
                let l = self.reranker.margin_loss(&mut g, gold, cands)?;
                let v = g.scalar(l);
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("reranker loss is {v} on example {i}")));
                }
                (v, (v > 0.0).then(|| g.backward(l)).transpose()?)
            };
            if let Some(grads) = grads {
                self.adam.step(self.reranker.params_mut(), &grads);
            }
            total += loss;
        }
        Ok(total / data.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, DEFAULT_EPS};

    fn trees() -> Vec<BinaryTree> {
        [
            "(S (NP (DT the) (NN cat)) (VP (VBD sat) (PP (IN on) (NN mat))))",
            "(S (NP (DT the) (NN cat)) (VP (VP (VBD sat) (IN on)) (NN mat)))",
        ]
        .iter()
        .map(|s| BinaryTree::parse(s).unwrap())
        .collect()
    }

    fn reranker(seed: u64) -> Reranker {
        let ts = trees();
        let vocab = Vocabulary::build(ts.iter().flat_map(|t| t.tokens()), None);
        let labels = LabelInventory::from_trees(&ts).unwrap();
        Reranker::new(RerankConfig::new(4, 3, 3), vocab, labels, None, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn zeroed() -> Reranker {
        let mut r = reranker(0);
        let ids: Vec<_> = r.params().ids().collect();
        for id in ids {
            r.params_mut().get_mut(id).values_mut().fill(0.0);
        }
        r
    }

    #[test]
    fn zero_params_score_uniformly() {
        let r = zeroed();
        let m = r.labels().len() as f64;
        assert_eq!(m, 4.0);
        let t = &trees()[0];
        let b = t.branches().count() as f64;
        assert!((r.score(t).unwrap() + b * m.ln()).abs() < 1e-12);
        assert_eq!(r.score(&BinaryTree::parse("(NN cat)").unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn saturated_label_row_scores_near_zero() {
        let mut r = zeroed();
        let s = r.score_params().clone();
        r.params_mut().get_mut(s.b).values_mut().fill(1.0);
        let id = r.labels().id("NP").unwrap();
        let ls = 3;
        r.params_mut().get_mut(s.w_out).values_mut()[id * ls..(id + 1) * ls].fill(10.0);
        let mut g = Graph::new(r.params());
        let z = g.zeros(3);
        let h = g.zeros(4);
        let v = r.node_score(&mut g, "NP", z, z, h).unwrap();
        assert!(g.scalar(v) > -1e-10);
        assert!(r.node_score(&mut g, "XP", z, z, h).is_err());
    }

    #[test]
    fn node_scores_normalize() {
        let r = reranker(4);
        let mut g = Graph::new(r.params());
        let nb = g.vector(vec![0.3, -0.2, 0.9]);
        let nc = g.vector(vec![-0.5, 0.1, 0.4]);
        let h = g.vector(vec![1.0, 0.5, -1.0, 0.2]);
        let total: f64 = r
            .labels()
            .labels()
            .to_vec()
            .iter()
            .map(|l| {
                let v = r.node_score(&mut g, l, nb, nc, h).unwrap();
                g.scalar(v).exp()
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn margin_cases() {
        let r = reranker(5);
        let ts = trees();
        let mut g = Graph::new(r.params());
        let only_gold = r.margin_loss(&mut g, &ts[0], &ts[..1]).unwrap();
        assert_eq!(g.scalar(only_gold), 0.0);
        assert!(r.margin_loss(&mut g, &ts[0], &[]).is_err());

        let l = r.margin_loss(&mut g, &ts[0], &ts).unwrap();
        let f_gold = r.score(&ts[0]).unwrap();
        let f_rival = r.score(&ts[1]).unwrap();
        let wrong = ts[1].brackets().difference(&ts[0].brackets()).count() as f64;
        assert_eq!(wrong, 1.0);
        let want = (f_rival + 0.1 * wrong - f_gold).max(0.0);
        assert!((g.scalar(l) - want).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let r = reranker(6);
        let ts = trees();
        let report = grad_check(r.params(), |g| r.tree_score(g, &ts[0]), DEFAULT_EPS, 1e-4).unwrap();
        assert!(report.pass, "{report:?}");
        let mut r = r;
        r.config.mu = 50.0;
        let report = grad_check(r.params(), |g| r.margin_loss(g, &ts[0], &ts), DEFAULT_EPS, 1e-4).unwrap();
        assert!(report.pass, "{report:?}");
    }

    fn scored(base: &[f64], model: &[f64]) -> Vec<ScoredTree> {
        base.iter()
            .zip(model)
            .map(|(&b, &m)| ScoredTree {
                tree: trees()[0].clone(),
                model_score: m,
                base_score: b,
            })
            .collect()
    }

    #[test]
    fn interpolation_extremes_and_ties() {
        let c = scored(&[-1.0, -2.0, -3.0], &[-5.0, -1.0, -4.0]);
        assert_eq!(rerank(&c, 0.0).unwrap(), 0);
        assert_eq!(rerank(&c, 1.0).unwrap(), 1);
        let tie = scored(&[-2.0, -1.0], &[-1.0, -2.0]);
        assert_eq!(rerank(&tie, 0.5).unwrap(), 1);
        assert!(rerank(&[], 0.5).is_err());
    }

    #[test]
    fn oracle_and_f1() {
        let ts = trees();
        assert_eq!(bracket_prf(&ts[0], &ts[0]), (1.0, 1.0, 1.0));
        let (p, r, f) = bracket_prf(&ts[1], &ts[0]);
        assert_eq!((p, r), (0.75, 0.75));
        assert!((f - 0.75).abs() < 1e-12);
        let c = vec![
            ScoredTree {
                tree: ts[1].clone(),
                model_score: 0.0,
                base_score: 0.0,
            },
            ScoredTree {
                tree: ts[0].clone(),
                model_score: 0.0,
                base_score: -9.0,
            },
        ];
        assert_eq!(oracle(&c, &ts[0]).unwrap(), 1);
    }

    #[test]
    fn candidate_blocks() {
        let text = "-1.5\t(S (A a) (B b))\n-2\t(S (B a) (A b))\n\n\n-0.5\t(X (A c) (B d))\n";
        let blocks = read_candidates(text.as_bytes()).unwrap();
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].len(), 2);
        assert_eq!(blocks[0][1].0, -2.0);
        let err = read_candidates("oops (S (A a) (B b))\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Line { line: 1, .. }));
    }

    #[test]
    fn training_reduces_margin_loss() {
        let ts = trees();
        let data = [(ts[0].clone(), ts.clone()), (ts[1].clone(), ts.clone())];
        let mut t = RerankTrainer::new(reranker(7), AdamConfig { lr: 0.01, ..Default::default() }, 1);
        let first = t.epoch(&data[..1]).unwrap();
        let mut last = first;
        for _ in 0..50 {
            last = t.epoch(&data[..1]).unwrap();
        }
        assert!(last <= first);
        assert_eq!(last, 0.0);
    }
}
