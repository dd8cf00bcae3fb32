use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use lextree::analysis::{
    bucket_accuracy, compare_strategies, extract_heads, format_buckets, format_comparison, head_records, head_vectors,
    render_heads, root_outcomes, Bucketing,
};
use lextree::bottomup_tree::HeadStrategy;
use lextree::diagnostics::{gradcheck_model, gradcheck_reranker, GradcheckSpec, GradcheckSummary};
use lextree::model::{
    count_params, evaluate, majority_root_accuracy, train, AdamConfig, Model, ModelConfig, ParamCount, Variant,
};
use lextree::reranker::{
    oracle, read_candidates, rerank, LabelInventory, RerankConfig, RerankTrainer, Reranker, ScoredTree,
};
use lextree::treebank::{flat_tree, load_dataset, load_embeddings, BinaryTree, EmbeddingTable, LoadOptions, Task, Vocabulary};
use lextree::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::manifest::{FileEntry, RunManifest, Selection};
use crate::opts::{
    base_seed, embedding_file_dim, parse_dims, CountArgs, EvalArgs, GradcheckArgs, InspectArgs, PredictArgs,
    RerankArgs, Settings, TrainArgs,
};

struct Data {
    train: Vec<BinaryTree>,
    dev: Vec<BinaryTree>,
    test: Option<Vec<BinaryTree>>,
    vocab: Vocabulary,
    table: Option<EmbeddingTable>,
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Config(format!("{flag} is required")))
}

fn token_keys<'a>(trees: impl IntoIterator<Item = &'a BinaryTree>) -> HashSet<String> {
    let mut keep = HashSet::new();
    for t in trees {
        for w in t.tokens() {
            keep.insert(w.to_string());
            keep.insert(w.to_lowercase());
        }
    }
    keep
}

fn load_table(path: &Path, dim: usize, keep: &HashSet<String>) -> Result<EmbeddingTable> {
    let t = load_embeddings(path, dim, Some(keep)).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    log::info!("{} embeddings of size {dim} kept from {}", t.len(), path.display());
    Ok(t)
}

fn load_options(s: &Settings) -> LoadOptions {
    LoadOptions {
        allow_flat: s.train.model.variant == Variant::BiLstm,
        skip_invalid: s.allow_nary,
    }
}

/// Vocabulary over every split when pre-trained vectors are given (so
/// dev and test words keep their vectors), over the training split
/// otherwise.
fn load_data(s: &Settings) -> Result<Data> {
    let opts = load_options(s);
    let train = load_dataset(required(&s.train_path, "--train")?, s.task, opts)?;
    let dev = load_dataset(required(&s.dev_path, "--dev")?, s.task, opts)?;
    let test = s
        .test_path
        .as_deref()
        .map(|p| load_dataset(p, s.task, opts))
        .transpose()?;
    log::info!(
        "loaded {} train, {} dev, {} test trees",
        train.len(),
        dev.len(),
        test.as_ref().map_or(0, Vec::len)
    );
    let all = || train.iter().chain(&dev).chain(test.iter().flatten());
    let table = match &s.embeddings {
        Some(p) => Some(load_table(p, s.train.model.input_dim, &token_keys(all()))?),
        None => None,
    };
    let vocab = match &table {
        Some(t) => Vocabulary::build(all().flat_map(|tr| tr.tokens()), Some(t)),
        None => Vocabulary::build(train.iter().flat_map(|tr| tr.tokens()), None),
    };
    Ok(Data {
        train,
        dev,
        test,
        vocab,
        table,
    })
}

fn task_name(t: Task) -> String {
    match t {
        Task::Sst5 => "sst5".into(),
        Task::Sst2 => "sst2".into(),
        Task::Trec => "trec".into(),
        Task::Custom { classes } => format!("custom:{classes}"),
    }
}

pub fn train_cmd(args: &TrainArgs) -> Result<ExitCode> {
    let s = args.model.resolve()?;
    let data = load_data(&s)?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("lextree-run"));
    fs::create_dir_all(&out)?;
    let metrics_path = out.join("metrics.jsonl");
    let mut metrics = BufWriter::new(File::create(&metrics_path)?);

    println!(
        "majority baseline (dev root): {:.2}",
        100.0 * majority_root_accuracy(&data.dev, s.task.num_classes())
    );
    println!("{:>6} {:>6} {:>12} {:>9} {:>9}", "seed", "epoch", "train_loss", "dev_root", "dev_node");
    let mut io_err = None;
    let outcome = train(&s.train, &data.vocab, data.table.as_ref(), &data.train, &data.dev, |m| {
        println!(
            "{:>6} {:>6} {:>12.4} {:>9.2} {:>9.2}",
            m.seed,
            m.epoch,
            m.train_loss,
            100.0 * m.dev_root_acc,
            100.0 * m.dev_node_acc
        );
        let line = serde_json::to_string(m).expect("metrics serialize");
        if let Err(e) = writeln!(metrics, "{line}") {
            io_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    metrics.flush()?;
    drop(metrics);

    let ckpt = out.join("best.ckpt");
    outcome.model.save(&ckpt)?;
    let test = data.test.as_deref().map(|t| evaluate(&outcome.model, t)).transpose()?;
    let selection = Selection {
        seed: outcome.seed,
        epoch: outcome.epoch,
        dev_root_acc: outcome.dev.root(),
        dev_node_acc: outcome.dev.node(),
        test_root_acc: test.map(|a| a.root()),
        test_node_acc: test.map(|a| a.node()),
    };
    println!(
        "best: seed {} epoch {} dev root {:.2} node {:.2}{}",
        selection.seed,
        selection.epoch,
        100.0 * selection.dev_root_acc,
        100.0 * selection.dev_node_acc,
        test.map_or(String::new(), |a| format!(" | test root {:.2} node {:.2}", 100.0 * a.root(), 100.0 * a.node()))
    );

    let mut manifest = RunManifest::new(task_name(s.task), s.train.clone(), data.vocab.len(), selection);
    for (role, p) in [
        ("train", &s.train_path),
        ("dev", &s.dev_path),
        ("test", &s.test_path),
        ("embeddings", &s.embeddings),
    ] {
        if let Some(p) = p {
            manifest.inputs.push(FileEntry::of(role, p)?);
        }
    }
    manifest.outputs.push(FileEntry::of("checkpoint", &ckpt)?);
    manifest.outputs.push(FileEntry::of("metrics", &metrics_path)?);
    manifest.write(&out.join("manifest.json"))?;
    println!("{}", serde_json::to_string(&manifest.selection)?);
    Ok(ExitCode::SUCCESS)
}

/// Task implied by a checkpoint's class count unless given explicitly.
fn eval_task(name: Option<&str>, classes: Option<usize>, model: &ModelConfig) -> Result<Task> {
    let task = match name {
        Some(n) => Task::parse(n, classes.or(Some(model.classes)))?,
        None => match model.classes {
            5 => Task::Sst5,
            2 => Task::Sst2,
            6 => Task::Trec,
            k => Task::Custom { classes: k },
        },
    };
    if task.num_classes() != model.classes {
        return Err(Error::Config(format!(
            "task has {} classes but the checkpoint predicts {}",
            task.num_classes(),
            model.classes
        )));
    }
    Ok(task)
}

pub fn eval_cmd(args: &EvalArgs) -> Result<ExitCode> {
    let model = Model::load(&args.checkpoint)?;
    let task = eval_task(args.task.as_deref(), args.classes, model.config())?;
    let input = args
        .input
        .as_deref()
        .or(args.test.as_deref())
        .ok_or_else(|| Error::Config("--input (or --test) is required".into()))?;
    let opts = LoadOptions {
        allow_flat: model.config().variant == Variant::BiLstm,
        skip_invalid: args.allow_nary,
    };
    let data = load_dataset(input, task, opts)?;
    let acc = evaluate(&model, &data)?;
    println!(
        "{} trees  root {:.2} ({}/{})  nodes {:.2} ({}/{})",
        data.len(),
        100.0 * acc.root(),
        acc.root_correct,
        acc.root_total,
        100.0 * acc.node(),
        acc.node_correct,
        acc.node_total
    );
    if args.buckets {
        let outcomes = root_outcomes(&model, &data)?;
        for (title, b) in [
            ("length", Bucketing::Length),
            ("class", Bucketing::Class),
            ("negation", Bucketing::Negation),
        ] {
            println!("\n# {title}");
            print!("{}", format_buckets(&bucket_accuracy(&outcomes, b, task.num_classes())));
        }
    }
    println!("{}", json!({"root_acc": acc.root(), "node_acc": acc.node(), "accuracy": acc}));
    Ok(ExitCode::SUCCESS)
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let f = File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn parse_input_line(line: &str) -> Result<BinaryTree> {
    let t = line.trim();
    if t.starts_with('(') {
        BinaryTree::parse(t)
    } else {
        flat_tree(&t.split_whitespace().collect::<Vec<_>>())
    }
}

pub fn predict_cmd(args: &PredictArgs) -> Result<ExitCode> {
    let model = Model::load(&args.checkpoint)?;
    for (n, line) in read_lines(&args.input)? {
        let tree = parse_input_line(&line).map_err(|e| Error::Line {
            line: n,
            msg: e.to_string(),
        })?;
        let lp = model.root_log_probs(&tree)?;
        let pred = lextree::model::argmax(&lp);
        let probs: Vec<f64> = lp.iter().map(|x| x.exp()).collect();
        println!(
            "{}",
            json!({"line": n, "tokens": tree.tokens().join(" "), "pred": pred, "probs": probs})
        );
    }
    Ok(ExitCode::SUCCESS)
}

pub fn inspect_cmd(args: &InspectArgs) -> Result<ExitCode> {
    let model = Model::load(&args.checkpoint)?;
    let mut jsonl = match &args.out {
        Some(p) => Some(BufWriter::new(File::create(p)?)),
        None => None,
    };
    for (n, line) in read_lines(&args.input)? {
        let tree = parse_input_line(&line).map_err(|e| Error::Line {
            line: n,
            msg: e.to_string(),
        })?;
        let (xs, _) = head_vectors(&model, &tree)?;
        let heads = extract_heads(&tree, &xs)?;
        println!("# line {n}");
        print!("{}", render_heads(&tree, &heads));
        if let Some(w) = jsonl.as_mut() {
            let rec = json!({"line": n, "tokens": tree.tokens(), "nodes": head_records(&tree, &heads)});
            writeln!(w, "{rec}")?;
        }
    }
    if let Some(mut w) = jsonl {
        w.flush()?;
    }
    Ok(ExitCode::SUCCESS)
}

fn print_gradcheck(s: &GradcheckSummary) {
    let verdict = if s.pass { "PASS" } else { "FAIL" };
    print!(
        "{verdict} {} max_rel_err={:.3e} trees={} coords={}",
        s.target, s.max_rel_err, s.trees, s.checked
    );
    if s.skipped_near_kink > 0 {
        print!(" skipped_near_kink={}", s.skipped_near_kink);
    }
    if let Some(w) = &s.worst {
        print!(" worst={w}");
    }
    if let Some(f) = &s.failure {
        print!(" failure={f:?}");
    }
    println!();
}

pub fn gradcheck_cmd(args: &GradcheckArgs) -> Result<ExitCode> {
    let (e, d) = parse_dims(&args.dims)?;
    let spec = GradcheckSpec {
        input_dim: e,
        hidden_dim: d,
        out_hidden: args.out_hidden,
        classes: args.classes,
        strategy: args.strategy.parse()?,
        trees: args.trees,
        max_leaves: args.max_leaves,
        tolerance: args.tol,
        seed: base_seed(Some(args.seed))?,
    };
    if spec.trees == 0 || spec.max_leaves == 0 || spec.classes == 0 || spec.out_hidden == 0 {
        return Err(Error::Config("--trees, --max-leaves, --classes and --out-hidden must be positive".into()));
    }
    let key = args.variant.to_lowercase();
    let mut summaries = Vec::new();
    if key == "all" {
        for v in Variant::ALL {
            summaries.push(gradcheck_model(v, &spec)?);
        }
        summaries.push(gradcheck_reranker(&spec)?);
    } else if key == "reranker" {
        summaries.push(gradcheck_reranker(&spec)?);
    } else {
        summaries.push(gradcheck_model(args.variant.parse()?, &spec)?);
    }
    summaries.iter().for_each(print_gradcheck);
    Ok(if summaries.iter().all(|s| s.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

pub fn count_cmd(args: &CountArgs) -> Result<ExitCode> {
    let strategy: HeadStrategy = args.strategy.parse()?;
    let variants: Vec<Variant> = if args.variant.eq_ignore_ascii_case("all") {
        Variant::ALL.to_vec()
    } else {
        vec![args.variant.parse()?]
    };
    for v in variants {
        let mut cfg = ModelConfig::new(v, args.embed_dim, args.hidden, args.out_hidden, args.classes).with_strategy(strategy);
        cfg.split_forget = args.split_forget;
        let count = count_params(&cfg)?;
        println!("# {v} (e={}, d={}, l={}, k={})", args.embed_dim, args.hidden, args.out_hidden, args.classes);
        println!("{count}");
        match ParamCount::reference(v) {
            Some(r) => println!(
                "reference {r}  deviation {:+.2}%",
                100.0 * (count.total as f64 - r as f64) / r as f64
            ),
            None => println!("reference n/a"),
        }
        println!();
    }
    Ok(ExitCode::SUCCESS)
}

pub fn compare_cmd(args: &TrainArgs) -> Result<ExitCode> {
    let s = args.model.resolve()?;
    let data = load_data(&s)?;
    let rows = compare_strategies(
        &s.train,
        &data.vocab,
        data.table.as_ref(),
        &data.train,
        &data.dev,
        data.test.as_deref(),
    )?;
    print!("{}", format_comparison(&rows));
    if let Some(out) = &args.out {
        fs::create_dir_all(out)?;
        fs::write(out.join("comparison.json"), serde_json::to_string_pretty(&rows)? + "\n")?;
    }
    Ok(ExitCode::SUCCESS)
}

fn read_candidate_file(path: &Path) -> Result<Vec<Vec<(f64, BinaryTree)>>> {
    let f = File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    read_candidates(BufReader::new(f)).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

fn read_trees(path: &Path) -> Result<Vec<BinaryTree>> {
    read_lines(path)?
        .into_iter()
        .map(|(n, l)| {
            BinaryTree::parse(l.trim()).map_err(|e| Error::Invalid(format!("{}:{n}: {e}", path.display())))
        })
        .collect()
}

#[derive(Default)]
struct BracketTally {
    matched: usize,
    pred: usize,
    gold: usize,
}

impl BracketTally {
    fn add(&mut self, pred: &BinaryTree, gold: &BinaryTree) {
        let (p, g) = (pred.brackets(), gold.brackets());
        self.matched += p.intersection(&g).count();
        self.pred += p.len();
        self.gold += g.len();
    }

    fn f1(&self) -> f64 {
        if self.pred + self.gold == 0 {
            return 1.0;
        }
        2.0 * self.matched as f64 / (self.pred + self.gold) as f64
    }
}

pub fn rerank_cmd(args: &RerankArgs) -> Result<ExitCode> {
    let blocks = read_candidate_file(&args.candidates)?;
    let gold = args.gold.as_deref().map(read_trees).transpose()?;
    if let Some(g) = &gold {
        if g.len() != blocks.len() {
            return Err(Error::Config(format!(
                "{} gold trees for {} candidate blocks",
                g.len(),
                blocks.len()
            )));
        }
    }
    let training = match (&args.train_candidates, &args.train_gold) {
        (Some(c), Some(g)) => {
            let (c, g) = (read_candidate_file(c)?, read_trees(g)?);
            if c.len() != g.len() {
                return Err(Error::Config(format!("{} training gold trees for {} blocks", g.len(), c.len())));
            }
            g.into_iter()
                .zip(c)
                .map(|(g, b)| (g, b.into_iter().map(|(_, t)| t).collect::<Vec<_>>()))
                .collect::<Vec<_>>()
        }
        _ => Vec::new(),
    };

    let mut all: Vec<&BinaryTree> = blocks.iter().flatten().map(|(_, t)| t).collect();
    for (g, c) in &training {
        all.push(g);
        all.extend(c);
    }
    let labels = LabelInventory::from_trees(all.iter().copied())?;
    let input_dim = match &args.embeddings {
        Some(p) => embedding_file_dim(p)?,
        None => args.embed_dim,
    };
    let table = match &args.embeddings {
        Some(p) => Some(load_table(p, input_dim, &token_keys(all.iter().copied()))?),
        None => None,
    };
    let vocab = Vocabulary::build(all.iter().flat_map(|t| t.tokens()), table.as_ref());
    let mut cfg = RerankConfig::new(input_dim, args.hidden, args.score_hidden);
    cfg.alpha = args.alpha;
    cfg.mu = args.mu;
    let seed = base_seed(Some(args.seed))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reranker = Reranker::new(cfg, vocab, labels, table.as_ref(), &mut rng)?;
    if !training.is_empty() {
        let mut trainer = RerankTrainer::new(reranker, AdamConfig::default(), seed);
        for epoch in 1..=args.epochs {
            let loss = trainer.epoch(&training)?;
            eprintln!("epoch {epoch}: mean margin loss {loss:.4}");
        }
        reranker = trainer.into_reranker();
    }

    let mut base = BracketTally::default();
    let mut chosen_tally = BracketTally::default();
    for (i, block) in blocks.iter().enumerate() {
        let scored = block
            .iter()
            .map(|(b, t)| {
                Ok(ScoredTree {
                    tree: t.clone(),
                    model_score: reranker.score(t)?,
                    base_score: *b,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let pick = match (&gold, args.oracle) {
            (Some(g), true) => oracle(&scored, &g[i])?,
            _ => rerank(&scored, args.alpha)?,
        };
        if let Some(g) = &gold {
            let first = (0..scored.len())
                .max_by(|&a, &b| scored[a].base_score.total_cmp(&scored[b].base_score).then(b.cmp(&a)))
                .expect("non-empty block");
            base.add(&scored[first].tree, &g[i]);
            chosen_tally.add(&scored[pick].tree, &g[i]);
        }
        println!("{}", scored[pick].tree.to_sexpr());
    }
    if gold.is_some() {
        eprintln!(
            "bracket F1: base 1-best {:.2}  {} {:.2}",
            100.0 * base.f1(),
            if args.oracle { "oracle" } else { "reranked" },
            100.0 * chosen_tally.f1()
        );
    }
    Ok(ExitCode::SUCCESS)
}
