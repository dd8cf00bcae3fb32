use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Adam, AdamConfig, Model, ModelConfig, ObjectiveOptions, Supervision};
use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::treebank::{BinaryTree, EmbeddingTable, NodeId, Vocabulary};

/// Hyperparameters of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub dropout: f64,
    pub l2: f64,
    /// Also regularize the embedding table.
    #[serde(default)]
    pub l2_embeddings: bool,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub supervision: Supervision,
    #[serde(default)]
    pub adam: AdamConfig,
    /// Reshuffle the training set every epoch.
    #[serde(default = "yes")]
    pub shuffle: bool,
}

fn yes() -> bool {
    true
}

impl TrainConfig {
    /// Defaults: dropout 0.5, λ = 1e-4, 30 epochs, seeds 1..=5, all-node
    /// supervision.
    pub fn new(model: ModelConfig) -> Self {
        TrainConfig {
            model,
            dropout: 0.5,
            l2: 1e-4,
            l2_embeddings: false,
            epochs: 30,
            seeds: (1..=5).collect(),
            supervision: Supervision::AllNodes,
            adam: AdamConfig::default(),
            shuffle: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config(format!("l2 weight {} must be finite and non-negative", self.l2)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.adam.lr.is_nan() || self.adam.lr <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }

    pub fn objective_options(&self) -> ObjectiveOptions {
        ObjectiveOptions {
            dropout: self.dropout,
            l2: self.l2,
            l2_embeddings: self.l2_embeddings,
            supervision: self.supervision,
        }
    }
}

/// Root and all-node accuracy counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accuracy {
    pub root_correct: usize,
    pub root_total: usize,
    pub node_correct: usize,
    pub node_total: usize,
}

impl Accuracy {
    pub fn root(&self) -> f64 {
        ratio(self.root_correct, self.root_total)
    }

    pub fn node(&self) -> f64 {
        ratio(self.node_correct, self.node_total)
    }

    fn merge(mut self, other: Accuracy) -> Accuracy {
        self.root_correct += other.root_correct;
        self.root_total += other.root_total;
        self.node_correct += other.node_correct;
        self.node_total += other.node_total;
        self
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// One record per (seed, epoch).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub seed: u64,
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_root_acc: f64,
    pub dev_node_acc: f64,
}

fn tree_accuracy(model: &Model, tree: &BinaryTree) -> Result<Accuracy> {
    let nodes: Vec<NodeId> = tree
        .post_order()
        .into_iter()
        .filter(|&n| tree.node(n).label.is_some())
        .collect();
    let preds = model.predict_nodes(tree, &nodes)?;
    let mut acc = Accuracy::default();
    for (&n, &p) in nodes.iter().zip(&preds) {
        let ok = tree.node(n).label == Some(p);
        acc.node_total += 1;
        acc.node_correct += ok as usize;
        if n == tree.root() {
            acc.root_total += 1;
            acc.root_correct += ok as usize;
        }
    }
    Ok(acc)
}

/// Accuracy without dropout over every labeled node.
pub fn evaluate(model: &Model, data: &[BinaryTree]) -> Result<Accuracy> {
    #[cfg(feature = "parallel")]
    let parts: Vec<Result<Accuracy>> = {
        use rayon::prelude::*;
        data.par_iter().map(|t| tree_accuracy(model, t)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Result<Accuracy>> = data.iter().map(|t| tree_accuracy(model, t)).collect();
    parts
        .into_iter()
        .try_fold(Accuracy::default(), |acc, p| Ok(acc.merge(p?)))
}

/// Single-seed trainer: per-example Adam updates.
///
/// Initialization, example order and dropout masks come from three
/// independent streams of the seed, so two configurations that differ
/// only in extra parameters see the same order and masks.
pub struct Trainer {
    model: Model,
    adam: Adam,
    opts: ObjectiveOptions,
    shuffle: bool,
    seed: u64,
    epoch: usize,
    order_rng: ChaCha8Rng,
    dropout_rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(cfg: &TrainConfig, vocab: Vocabulary, table: Option<&EmbeddingTable>, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut init = ChaCha8Rng::seed_from_u64(seed);
        let model = Model::new(cfg.model.clone(), vocab, table, &mut init)?;
        Ok(Self::from_model(model, cfg, seed))
    }

    pub fn from_model(model: Model, cfg: &TrainConfig, seed: u64) -> Self {
        let stream = |s| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(s);
            r
        };
        Trainer {
            adam: Adam::new(cfg.adam, model.params()),
            model,
            opts: cfg.objective_options(),
            shuffle: cfg.shuffle,
            seed,
            epoch: 0,
            order_rng: stream(1),
            dropout_rng: stream(2),
        }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// One update on one example; returns the objective before the update.
    pub fn step(&mut self, tree: &BinaryTree) -> Result<f64> {
        let (loss, grads) = {
            let mut g = Graph::new(self.model.params());
            let obj = self.model.objective(&mut g, tree, &self.opts, &mut self.dropout_rng)?;
            let loss = g.scalar(obj);
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("loss is {loss}")));
            }
            (loss, g.backward(obj)?)
        };
        self.adam.step(self.model.params_mut(), &grads);
        Ok(loss)
    }

    /// One pass over `data`; returns the mean objective per example.
    pub fn train_epoch(&mut self, data: &[BinaryTree]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Invalid("empty training set".into()));
        }
        self.epoch += 1;
        let mut order: Vec<usize> = (0..data.len()).collect();
        if self.shuffle {
            order.shuffle(&mut self.order_rng);
        }
        let mut total = 0.0;
        for i in order {
            total += self.step(&data[i]).map_err(|e| match e {
                Error::NonFinite(msg) => Error::NonFinite(format!(
                    "seed {} epoch {} example {i}: {msg}",
                    self.seed, self.epoch
                )),
                e => e,
            })?;
        }
        Ok(total / data.len() as f64)
    }
}

/// Result of a multi-seed run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters at the best (seed, epoch) by dev root accuracy.
    pub model: Model,
    pub seed: u64,
    pub epoch: usize,
    pub dev: Accuracy,
    pub metrics: Vec<EpochMetrics>,
}

/// Trains one model per seed for `cfg.epochs` epochs, evaluating on `dev`
/// after each epoch, and keeps the snapshot with the highest dev root
/// accuracy (earliest wins ties). `on_epoch` sees every record as it is
/// produced.
pub fn train(
    cfg: &TrainConfig,
    vocab: &Vocabulary,
    table: Option<&EmbeddingTable>,
    train_set: &[BinaryTree],
    dev_set: &[BinaryTree],
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(Error::Invalid("training and development sets must be non-empty".into()));
    }
    let mut best: Option<TrainOutcome> = None;
    let mut metrics = Vec::new();
    for &seed in &cfg.seeds {
        let mut trainer = Trainer::new(cfg, vocab.clone(), table, seed)?;
        for _ in 0..cfg.epochs {
            let train_loss = trainer.train_epoch(train_set)?;
            let dev = evaluate(trainer.model(), dev_set)?;
            let record = EpochMetrics {
                seed,
                epoch: trainer.epochs_done(),
                train_loss,
                dev_root_acc: dev.root(),
                dev_node_acc: dev.node(),
            };
            log::info!(
                "seed {seed} epoch {}: loss {train_loss:.4} dev root {:.4} node {:.4}",
                record.epoch,
                record.dev_root_acc,
                record.dev_node_acc
            );
            on_epoch(&record);
            metrics.push(record);
            if best.as_ref().is_none_or(|b| dev.root() > b.dev.root()) {
                best = Some(TrainOutcome {
                    model: trainer.model().clone(),
                    seed,
                    epoch: trainer.epochs_done(),
                    dev,
                    metrics: Vec::new(),
                });
            }
        }
    }
    let mut out = best.expect("at least one epoch ran");
    out.metrics = metrics;
    Ok(out)
}

/// Majority-class baseline accuracy at the root, for sanity reports.
pub fn majority_root_accuracy(data: &[BinaryTree], classes: usize) -> f64 {
    let mut counts = vec![0usize; classes];
    let mut total = 0;
    for t in data {
        if let Some(l) = t.node(t.root()).label {
            if l < classes {
                counts[l] += 1;
                total += 1;
            }
        }
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    ratio(best, total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;

    fn data() -> Vec<BinaryTree> {
        [
            "(4 (3 good) (4 (3 very) (4 good)))",
            "(0 (1 bad) (0 (1 very) (0 bad)))",
            "(3 (2 the) (3 good))",
            "(1 (2 the) (1 bad))",
        ]
        .iter()
        .map(|s| BinaryTree::parse(s).unwrap())
        .collect()
    }

    fn cfg(variant: Variant) -> TrainConfig {
        let mut c = TrainConfig::new(ModelConfig::new(variant, 6, 5, 4, 5));
        c.epochs = 3;
        c.seeds = vec![1, 2];
        c.dropout = 0.2;
        c
    }

    fn vocab(d: &[BinaryTree]) -> Vocabulary {
        Vocabulary::build(d.iter().flat_map(|t| t.tokens()), None)
    }

    #[test]
    fn same_seed_same_metrics() {
        let d = data();
        let c = cfg(Variant::BiConTree);
        let a = train(&c, &vocab(&d), None, &d, &d, |_| {}).unwrap();
        let b = train(&c, &vocab(&d), None, &d, &d, |_| {}).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.metrics.len(), 6);
        for id in a.model.params().ids() {
            assert_eq!(a.model.params().get(id).values(), b.model.params().get(id).values());
        }
    }

    #[test]
    fn loss_decreases_for_every_variant() {
        let d = data();
        for v in Variant::ALL {
            let mut c = cfg(v);
            c.dropout = 0.0;
            c.adam.lr = 0.01;
            let mut t = Trainer::new(&c, vocab(&d), None, 3).unwrap();
            let first = t.train_epoch(&d).unwrap();
            let mut last = first;
            for _ in 0..9 {
                last = t.train_epoch(&d).unwrap();
            }
            assert!(last < first, "{v}: {first} -> {last}");
        }
    }

    #[test]
    fn huge_l2_shrinks_parameters() {
        let d = data();
        let mut c = cfg(Variant::ConTree);
        c.l2 = 1e30;
        let mut t = Trainer::new(&c, vocab(&d), None, 1).unwrap();
        let norm = |m: &Model| {
            m.params()
                .ids()
                .filter(|&id| m.params().kind(id) != crate::autodiff::ParamKind::Embedding)
                .map(|id| m.params().get(id).squared_norm())
                .sum::<f64>()
        };
        let before = norm(t.model());
        for _ in 0..200 {
            t.train_epoch(&d).unwrap();
        }
        assert!(norm(t.model()) < 0.1 * before, "{} -> {}", before, norm(t.model()));
    }

    #[test]
    fn validation_rejects_bad_settings() {
        let mut c = cfg(Variant::ConTree);
        c.dropout = 1.0;
        assert!(c.validate().is_err());
        let mut c = cfg(Variant::ConTree);
        c.seeds.clear();
        assert!(c.validate().is_err());
        let d = data();
        assert!(train(&cfg(Variant::ConTree), &vocab(&d), None, &d, &[], |_| {}).is_err());
    }

    #[test]
    fn dropout_off_matches_evaluation() {
        let d = data();
        let mut c = cfg(Variant::ConTreeLex);
        c.dropout = 0.0;
        c.l2 = 0.0;
        let t = Trainer::new(&c, vocab(&d), None, 5).unwrap();
        let m = t.model();
        let mut g = Graph::new(m.params());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let obj = m.objective(&mut g, &d[0], &c.objective_options(), &mut rng).unwrap();
        let mut g2 = Graph::new(m.params());
        let enc = m.encode(&mut g2, &d[0], 0.0, &mut rng).unwrap();
        let loss = m.tree_loss(&mut g2, &d[0], &enc, Supervision::AllNodes).unwrap();
        assert_eq!(g.scalar(obj), g2.scalar(loss));
    }

    #[test]
    fn majority_baseline() {
        assert_eq!(majority_root_accuracy(&data(), 5), 0.25);
    }
}
