//! Browser demo: three operations over small models, each returning JSON.
//!
//! The plain functions do the work and are tested natively; the
//! `wasm_bindgen` wrappers only translate errors.

use lextree::analysis::{extract_heads, head_records, head_vectors, render_heads};
use lextree::bottomup_tree::HeadStrategy;
use lextree::diagnostics::{gradcheck_model, gradcheck_reranker, sentiment_corpus, GradcheckSpec};
use lextree::model::{evaluate, Model, ModelConfig, TrainConfig, Trainer, Variant};
use lextree::treebank::{BinaryTree, Vocabulary};
use lextree::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Upper bounds that keep a browser tab responsive.
const MAX_LEAVES: usize = 40;
const MAX_EPOCHS: usize = 60;
const MAX_TREES: usize = 30;

fn parse_tree(text: &str) -> Result<BinaryTree> {
    let t = BinaryTree::parse(text.trim())?;
    if t.num_leaves() > MAX_LEAVES {
        return Err(Error::Invalid(format!("at most {MAX_LEAVES} words, got {}", t.num_leaves())));
    }
    Ok(t)
}

/// Head words chosen at every node by an untrained lexicalized model.
/// `gate_bias` is written into every component of the gate bias, so large
/// positive values pull heads left and negative values pull them right.
pub fn head_view_json(tree: &str, strategy: &str, gate_bias: f64, seed: u64) -> Result<String> {
    let tree = parse_tree(tree)?;
    let strategy: HeadStrategy = strategy.parse()?;
    let vocab = Vocabulary::build(tree.tokens(), None);
    let cfg = ModelConfig::new(Variant::ConTreeLex, 8, 6, 4, 5).with_strategy(strategy);
    let mut model = Model::new(cfg, vocab, None, &mut ChaCha8Rng::seed_from_u64(seed))?;
    if let Some(b) = model.gate().map(|g| g.b_z) {
        model.params_mut().get_mut(b).values_mut().fill(gate_bias);
    }
    let (xs, zs) = head_vectors(&model, &tree)?;
    let heads = extract_heads(&tree, &xs)?;
    let gate_mean: Vec<Option<f64>> = zs
        .iter()
        .map(|z| z.as_ref().map(|z| z.iter().sum::<f64>() / z.len() as f64))
        .collect();
    let nodes: Vec<_> = head_records(&tree, &heads)
        .into_iter()
        .zip(tree.pre_order())
        .map(|(r, id)| json!({"record": r, "gate_mean": gate_mean[id], "tie": heads.nodes[id].tie}))
        .collect();
    Ok(json!({
        "strategy": strategy.code(),
        "tokens": tree.tokens(),
        "render": render_heads(&tree, &heads),
        "nodes": nodes,
    })
    .to_string())
}

/// Per-epoch loss and accuracy on the synthetic sentiment corpus
/// (40 training trees, 10 held out), without dropout.
pub fn train_curve_json(variant: &str, epochs: usize, seed: u64) -> Result<String> {
    if epochs == 0 || epochs > MAX_EPOCHS {
        return Err(Error::Config(format!("epochs must be in 1..={MAX_EPOCHS}")));
    }
    let variant: Variant = variant.parse()?;
    let data = sentiment_corpus(50, 2024)?;
    let (train, dev) = data.split_at(40);
    let vocab = Vocabulary::build(train.iter().flat_map(|t| t.tokens()), None);
    let mut cfg = TrainConfig::new(ModelConfig::new(variant, 12, 12, 12, 5));
    cfg.dropout = 0.0;
    cfg.adam.lr = 0.01;
    cfg.seeds = vec![seed];
    cfg.epochs = epochs;
    let mut trainer = Trainer::new(&cfg, vocab, None, seed)?;
    let mut rows = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let loss = trainer.train_epoch(train)?;
        let tr = evaluate(trainer.model(), train)?;
        let dv = evaluate(trainer.model(), dev)?;
        rows.push(json!({
            "epoch": epoch,
            "train_loss": loss,
            "train_node_acc": tr.node(),
            "dev_root_acc": dv.root(),
            "dev_node_acc": dv.node(),
        }));
    }
    Ok(json!({"variant": variant.cli_name(), "seed": seed, "epochs": rows}).to_string())
}

/// Finite-difference check of a variant (or "reranker") at e=5, d=4.
pub fn gradcheck_json(target: &str, trees: usize, seed: u64) -> Result<String> {
    if trees == 0 || trees > MAX_TREES {
        return Err(Error::Config(format!("trees must be in 1..={MAX_TREES}")));
    }
    let spec = GradcheckSpec {
        trees,
        seed,
        ..GradcheckSpec::default()
    };
    let summary = if target.eq_ignore_ascii_case("reranker") {
        gradcheck_reranker(&spec)?
    } else {
        gradcheck_model(target.parse()?, &spec)?
    };
    Ok(serde_json::to_string(&summary)?)
}

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn head_view(tree: &str, strategy: &str, gate_bias: f64, seed: u32) -> std::result::Result<String, JsError> {
    js(head_view_json(tree, strategy, gate_bias, seed.into()))
}

#[wasm_bindgen]
pub fn train_curve(variant: &str, epochs: u32, seed: u32) -> std::result::Result<String, JsError> {
    js(train_curve_json(variant, epochs as usize, seed.into()))
}

#[wasm_bindgen]
pub fn gradcheck(target: &str, trees: u32, seed: u32) -> std::result::Result<String, JsError> {
    js(gradcheck_json(target, trees as usize, seed.into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    const TREE: &str = "(3 (2 (2 the) (2 film)) (3 (2 is) (4 (2 very) (4 good))))";

    #[test]
    fn gate_bias_steers_heads() {
        let left: Value = serde_json::from_str(&head_view_json(TREE, "G", 30.0, 1).unwrap()).unwrap();
        let right: Value = serde_json::from_str(&head_view_json(TREE, "G", -30.0, 1).unwrap()).unwrap();
        assert_eq!(left["nodes"][0]["record"]["head"], "the");
        assert_eq!(right["nodes"][0]["record"]["head"], "good");
        assert!(left["nodes"][0]["gate_mean"].as_f64().unwrap() > 0.999);
        let l: Value = serde_json::from_str(&head_view_json(TREE, "L", 0.0, 1).unwrap()).unwrap();
        assert_eq!(l["nodes"][0]["record"]["head"], "the");
        assert!(l["nodes"][0]["gate_mean"].is_null());
        assert!(head_view_json("(1 a", "G", 0.0, 1).is_err());
        assert!(head_view_json(TREE, "Q", 0.0, 1).is_err());
    }

    #[test]
    fn training_curve_goes_down() {
        let v: Value = serde_json::from_str(&train_curve_json("biconTree", 8, 3).unwrap()).unwrap();
        let rows = v["epochs"].as_array().unwrap();
        assert_eq!(rows.len(), 8);
        let first = rows[0]["train_loss"].as_f64().unwrap();
        let last = rows[7]["train_loss"].as_f64().unwrap();
        assert!(last < first, "{first} -> {last}");
        assert!(train_curve_json("biconTree", 0, 3).is_err());
        assert_eq!(train_curve_json("conTree", 2, 9).unwrap(), train_curve_json("conTree", 2, 9).unwrap());
    }

    #[test]
    fn gradcheck_reports_pass() {
        for t in ["conTree+lex", "reranker"] {
            let v: Value = serde_json::from_str(&gradcheck_json(t, 2, 1).unwrap()).unwrap();
            assert_eq!(v["pass"], true, "{v}");
        }
        assert!(gradcheck_json("nope", 2, 1).is_err());
    }
}
