use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use lextree::bottomup_tree::HeadStrategy;
use lextree::model::{ModelConfig, Supervision, TrainConfig, Variant};
use lextree::treebank::Task;
use lextree::{Error, Result};

/// Environment variable overriding the base random seed.
pub const SEED_ENV: &str = "HLTREE_SEED";

#[derive(Parser, Debug)]
#[command(name = "lextree", version, about = "Head-lexicalized constituency Tree LSTMs")]
pub struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train with dev-based selection over several seeds.
    Train(TrainArgs),
    /// Accuracy of a checkpoint on a labeled file.
    Eval(EvalArgs),
    /// Root predictions for each tree in a file.
    Predict(PredictArgs),
    /// Head words recovered from head-lexicon vectors.
    InspectHeads(InspectArgs),
    /// Finite-difference gradient check on random trees.
    Gradcheck(GradcheckArgs),
    /// Trainable parameters outside the lookup table.
    CountParams(CountArgs),
    /// Train one model per head strategy and compare root accuracy.
    CompareStrategies(TrainArgs),
    /// Score k-best candidate trees and pick one per sentence.
    RerankScore(RerankArgs),
}

/// Model and training flags. Every flag may also come from `--config`
/// (`key = value` lines, keys spelled like the flags); flags win.
#[derive(Args, Debug, Default, Clone)]
pub struct ModelArgs {
    /// sst5, sst2, trec or custom.
    #[arg(long)]
    pub task: Option<String>,
    /// Class count for --task custom.
    #[arg(long)]
    pub classes: Option<usize>,
    /// bilstm, conTree, topdownConTree, conTree+lex or biconTree.
    #[arg(long)]
    pub variant: Option<String>,
    /// Head strategy: L, R, A or G.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Word vector size (inferred from --embeddings when omitted).
    #[arg(long = "embed-dim")]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long = "out-hidden")]
    pub out_hidden: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Number of seeds; seeds run from the base seed upwards.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Base seed (also settable through HLTREE_SEED, which wins).
    #[arg(long)]
    pub seed: Option<u64>,
    /// all (every labeled node) or root.
    #[arg(long)]
    pub supervision: Option<String>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Skip malformed or non-binary tree lines with a warning.
    #[arg(long = "allow-nary")]
    pub allow_nary: bool,
    /// Start the head gate at zero.
    #[arg(long = "zero-gate")]
    pub zero_gate: bool,
    /// Keep the head gate fixed during training.
    #[arg(long = "freeze-gate")]
    pub freeze_gate: bool,
    /// Separate head projection for the right forget gate.
    #[arg(long = "split-forget")]
    pub split_forget: bool,
    /// Top-down cell exactly as printed (parent head into g, parent cell into h).
    #[arg(long = "literal-topdown")]
    pub literal_topdown: bool,
    /// Include the lookup table in the L2 penalty.
    #[arg(long = "l2-embeddings")]
    pub l2_embeddings: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Output directory for the checkpoint, metrics and manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Labeled trees (defaults to --test).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long = "allow-nary")]
    pub allow_nary: bool,
    /// Also print length, class and negation breakdowns.
    #[arg(long)]
    pub buckets: bool,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// One bracketed tree (or, for bilstm, one tokenized sentence) per line.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Write per-node JSON records here instead of the text rendering.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// A model variant or "reranker".
    #[arg(long, default_value = "biconTree")]
    pub variant: String,
    /// Embedding and hidden size as EXD.
    #[arg(long, default_value = "5x4")]
    pub dims: String,
    #[arg(long = "out-hidden", default_value_t = 3)]
    pub out_hidden: usize,
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    #[arg(long, default_value = "G")]
    pub strategy: String,
    #[arg(long, default_value_t = 20)]
    pub trees: usize,
    #[arg(long = "max-leaves", default_value_t = 5)]
    pub max_leaves: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct CountArgs {
    /// A variant, or "all".
    #[arg(long, default_value = "all")]
    pub variant: String,
    #[arg(long = "embed-dim", default_value_t = 300)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 150)]
    pub hidden: usize,
    #[arg(long = "out-hidden", default_value_t = 128)]
    pub out_hidden: usize,
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    #[arg(long, default_value = "G")]
    pub strategy: String,
    #[arg(long = "split-forget")]
    pub split_forget: bool,
}

#[derive(Args, Debug)]
pub struct RerankArgs {
    /// Blocks of "base_score<TAB>tree" lines, one block per sentence.
    #[arg(long)]
    pub candidates: PathBuf,
    /// Gold trees aligned with the candidate blocks.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Training candidates and gold trees for the margin loss.
    #[arg(long = "train-candidates", requires = "train_gold")]
    pub train_candidates: Option<PathBuf>,
    #[arg(long = "train-gold")]
    pub train_gold: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    pub mu: f64,
    #[arg(long = "embed-dim", default_value_t = 50)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 50)]
    pub hidden: usize,
    #[arg(long = "score-hidden", default_value_t = 50)]
    pub score_hidden: usize,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Pick the candidate with the best F1 against --gold instead.
    #[arg(long, requires = "gold")]
    pub oracle: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// `key = value` lines; `#` starts a comment.
#[derive(Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

const CONFIG_KEYS: &[&str] = &[
    "task", "classes", "variant", "strategy", "embed_dim", "hidden", "out_hidden", "dropout", "l2", "lr",
    "epochs", "seeds", "seed", "supervision", "embeddings", "train", "dev", "test", "allow_nary", "zero_gate",
    "freeze_gate", "split_forget", "literal_topdown", "l2_embeddings",
];

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Config(format!("config line {}: {msg}", i + 1));
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let key = k.trim().replace('-', "_");
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(err(format!("unknown key {:?}", k.trim())));
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.values
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("config key {key}: cannot parse {v:?}")))
            })
            .transpose()
    }

    fn flag(&self, key: &str) -> Result<bool> {
        Ok(self.get::<bool>(key)?.unwrap_or(false))
    }
}

/// Fully resolved settings for training-style commands.
#[derive(Debug, Clone)]
pub struct Settings {
    pub task: Task,
    pub train: TrainConfig,
    pub embeddings: Option<PathBuf>,
    pub train_path: Option<PathBuf>,
    pub dev_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub allow_nary: bool,
}

pub fn base_seed(flag: Option<u64>) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(flag.unwrap_or(1)),
    }
}

/// First-line field count minus the word.
pub fn embedding_file_dim(path: &Path) -> Result<usize> {
    use std::io::{BufRead, BufReader};
    let f = fs::File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut first = String::new();
    BufReader::new(f).read_line(&mut first)?;
    let n = first.split_whitespace().count();
    if n < 2 {
        return Err(Error::Config(format!("{}: cannot infer embedding size", path.display())));
    }
    Ok(n - 1)
}

impl ModelArgs {
    pub fn resolve(&self) -> Result<Settings> {
        let cfg = match &self.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let pick = |flag: Option<String>, key: &str| -> Result<Option<String>> {
            Ok(flag.or(cfg.get::<String>(key)?))
        };
        let task_name = pick(self.task.clone(), "task")?.unwrap_or_else(|| "sst5".into());
        let classes = self.classes.or(cfg.get("classes")?);
        let task = Task::parse(&task_name, classes)?;
        let variant: Variant = pick(self.variant.clone(), "variant")?
            .as_deref()
            .unwrap_or("biconTree")
            .parse()?;
        let strategy: HeadStrategy = pick(self.strategy.clone(), "strategy")?
            .as_deref()
            .unwrap_or("G")
            .parse()?;
        let embeddings = self.embeddings.clone().or(cfg.get("embeddings")?);
        let embed_dim = match (self.embed_dim.or(cfg.get("embed_dim")?), &embeddings) {
            (Some(e), _) => e,
            (None, Some(p)) => embedding_file_dim(p)?,
            (None, None) => 300,
        };
        let hidden = self.hidden.or(cfg.get("hidden")?).unwrap_or(150);
        let default_out = if task == Task::Trec { 64 } else { 128 };
        let out_hidden = self.out_hidden.or(cfg.get("out_hidden")?).unwrap_or(default_out);

        let mut model = ModelConfig::new(variant, embed_dim, hidden, out_hidden, task.num_classes()).with_strategy(strategy);
        model.zero_gate = self.zero_gate || cfg.flag("zero_gate")?;
        model.freeze_gate = self.freeze_gate || cfg.flag("freeze_gate")?;
        model.split_forget = self.split_forget || cfg.flag("split_forget")?;
        model.literal_topdown = self.literal_topdown || cfg.flag("literal_topdown")?;

        let mut train = TrainConfig::new(model);
        if let Some(v) = self.dropout.or(cfg.get("dropout")?) {
            train.dropout = v;
        }
        if let Some(v) = self.l2.or(cfg.get("l2")?) {
            train.l2 = v;
        }
        if let Some(v) = self.lr.or(cfg.get("lr")?) {
            train.adam.lr = v;
        }
        if let Some(v) = self.epochs.or(cfg.get("epochs")?) {
            train.epochs = v;
        }
        let n_seeds = self.seeds.or(cfg.get("seeds")?).unwrap_or(5);
        let base = base_seed(self.seed.or(cfg.get("seed")?))?;
        train.seeds = (0..n_seeds as u64).map(|i| base + i).collect();
        train.l2_embeddings = self.l2_embeddings || cfg.flag("l2_embeddings")?;
        let default_sup = if task == Task::Trec { "root" } else { "all" };
        train.supervision = match pick(self.supervision.clone(), "supervision")?.as_deref().unwrap_or(default_sup) {
            "all" => Supervision::AllNodes,
            "root" => Supervision::RootOnly,
            other => return Err(Error::Config(format!("unknown supervision {other:?} (all or root)"))),
        };
        train.validate()?;

        Ok(Settings {
            task,
            train,
            embeddings,
            train_path: self.train.clone().or(cfg.get("train")?),
            dev_path: self.dev.clone().or(cfg.get("dev")?),
            test_path: self.test.clone().or(cfg.get("test")?),
            allow_nary: self.allow_nary || cfg.flag("allow_nary")?,
        })
    }
}

/// `EXD` such as `5x4`.
pub fn parse_dims(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("--dims expects EXD such as 5x4, got {s:?}"));
    let (e, d) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let e: usize = e.trim().parse().map_err(|_| bad())?;
    let d: usize = d.trim().parse().map_err(|_| bad())?;
    if e == 0 || d == 0 {
        return Err(bad());
    }
    Ok((e, d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_parsing() {
        let c = ConfigFile::parse("# comment\nhidden = 32\nout-hidden=8 # trailing\n\nzero_gate = true\n").unwrap();
        assert_eq!(c.get::<usize>("hidden").unwrap(), Some(32));
        assert_eq!(c.get::<usize>("out_hidden").unwrap(), Some(8));
        assert!(c.flag("zero_gate").unwrap());
        assert!(ConfigFile::parse("bogus = 1").is_err());
        assert!(ConfigFile::parse("hidden 3").is_err());
        assert!(ConfigFile::parse("hidden = x").unwrap().get::<usize>("hidden").is_err());
    }

    #[test]
    fn dims() {
        assert_eq!(parse_dims("5x4").unwrap(), (5, 4));
        assert!(parse_dims("5").is_err());
        assert!(parse_dims("0x4").is_err());
    }
}
