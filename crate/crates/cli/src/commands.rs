//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde_json::json;
use wctext_core::graph_io::format_weight;
use wctext_core::models::build_model;
use wctext_core::trainer::{mean_std, predict, run_many_with, score, train_model, SavedModel};
use wctext_core::{
    assign_validation, build_graph, compute_stats, load_corpus, load_graph, prune_vocabulary, save_graph, sweep_char_ngrams, Corpus,
    CorpusFormat, EdgeType, HetGraph, ModelConfig, NgramSpec, NodeRef, NodeType, ParamStore, PreprocessConfig, RunSummary,
    Scalar, Split, StatsConfig, TrainConfig,
};

use crate::config::{ConfigFile, Range, Threshold};
use crate::{AblationArgs, BuildArgs, Cli, CliError, Command, ModelArgs, TrainArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(format!("precision must be f32 or f64, got {other:?}")),
        }
    }
}

impl Precision {
    fn as_str(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn threads(cli: &Cli, file: &ConfigFile) -> Result<usize, CliError> {
    if file.switch(cli.deterministic, "deterministic")? {
        return Ok(1);
    }
    let default = std::thread::available_parallelism().map_or(1, |n| n.get());
    let n = file.resolve(cli.threads, "threads", default)?;
    if n == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    Ok(n)
}

struct BuildPlan {
    min_df: usize,
    stopwords: Option<std::path::PathBuf>,
    val_fraction: f64,
    seed: u64,
    stats: StatsConfig,
}

fn build_plan(file: &ConfigFile, args: &BuildArgs, ablation: &AblationArgs, seed: Option<u64>) -> Result<BuildPlan, CliError> {
    let min_freq = file.resolve(args.ngram_min_freq, "ngram-min-freq", 5)?;
    let mut word = file.resolve(args.word_ngrams, "word-ngrams", Range(Some((2, 2))))?.0;
    let mut char = file.resolve(args.char_ngrams, "char-ngrams", Range(Some((3, 4))))?.0;
    let mut sim = file.resolve(args.sim_threshold, "sim-threshold", Threshold(Some(0.5)))?.0;
    if file.switch(ablation.no_grams, "no-grams")? {
        word = None;
    }
    if file.switch(ablation.no_chargrams, "no-chargrams")? {
        char = None;
    }
    if file.switch(ablation.no_doc_sim, "no-doc-sim")? {
        sim = None;
    }
    let stats = StatsConfig {
        window: file.resolve(args.window, "window", 20)?,
        word_ngrams: word.map(|(a, b)| NgramSpec::word(a, b, min_freq)),
        char_ngrams: char.map(|(a, b)| NgramSpec::char(a, b, min_freq)),
        sim_threshold: sim,
    };
    for spec in stats.word_ngrams.iter().chain(&stats.char_ngrams) {
        spec.validate()?;
    }
    if let Some(t) = stats.sim_threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(CliError::Usage(format!("--sim-threshold must lie in [0,1], got {t}")));
        }
    }
    Ok(BuildPlan {
        min_df: file.resolve(args.min_df, "min-df", 5)?,
        stopwords: file.resolve_opt(args.stopwords.clone(), "stopwords")?,
        val_fraction: file.resolve(args.val_fraction, "val-fraction", 0.1)?,
        seed: file.resolve(seed, "seed", 0)?,
        stats,
    })
}

impl BuildPlan {
    fn to_json(&self) -> serde_json::Value {
        json!({
            "min_df": self.min_df,
            "stopwords": self.stopwords.as_ref().map(|p| p.display().to_string()),
            "val_fraction": self.val_fraction,
            "split_seed": self.seed,
            "stats": self.stats,
        })
    }

    fn corpus(&self, path: &Path) -> Result<Corpus, CliError> {
        let pre = match &self.stopwords {
            Some(p) => PreprocessConfig::with_stopword_file(p)?,
            None => PreprocessConfig::default(),
        };
        let raw = load_corpus(path, CorpusFormat::Tsv, &pre)?;
        let (pruned, report) = prune_vocabulary(&raw, self.min_df)?;
        log::info!(
            "corpus: {} documents, {} words kept, {} words removed, {} documents dropped",
            pruned.len(),
            pruned.vocabulary().len(),
            report.removed_words,
            report.dropped_documents
        );
        Ok(assign_validation(&pruned, self.val_fraction, self.seed)?)
    }
}

fn model_config(file: &ConfigFile, args: &ModelArgs, ablation: &AblationArgs) -> Result<ModelConfig, CliError> {
    let d = ModelConfig::default();
    let c = ModelConfig {
        model: file.resolve(args.model, "model", d.model)?,
        hidden_dim: file.resolve(args.hidden_dim, "hidden-dim", d.hidden_dim)?,
        num_layers: file.resolve(args.layers, "layers", d.num_layers)?,
        heads: file.resolve(args.heads, "heads", d.heads)?,
        head_dim: file.resolve(args.head_dim, "head-dim", d.head_dim)?,
        edge_dim: file.resolve(args.edge_dim, "edge-dim", d.edge_dim)?,
        dropout: file.resolve(args.dropout, "dropout", d.dropout)?,
        attention_dropout: !file.switch(args.no_attention_dropout, "no-attention-dropout")?,
        leaky_slope: file.resolve(args.leaky_slope, "leaky-slope", d.leaky_slope)?,
        use_grams: !file.switch(ablation.no_grams, "no-grams")?,
        use_chargrams: !file.switch(ablation.no_chargrams, "no-chargrams")?,
        use_doc_sim: !file.switch(ablation.no_doc_sim, "no-doc-sim")?,
    };
    c.validate()?;
    Ok(c)
}

fn train_config(file: &ConfigFile, args: &TrainArgs, seed: Option<u64>) -> Result<(TrainConfig, Precision), CliError> {
    let d = TrainConfig::default();
    let c = TrainConfig {
        lr: file.resolve(args.lr, "lr", d.lr)?,
        epochs: file.resolve(args.epochs, "epochs", d.epochs)?,
        patience: file.resolve(args.patience, "patience", d.patience)?,
        seed: file.resolve(seed, "seed", d.seed)?,
        runs: file.resolve(args.runs, "runs", d.runs)?,
        ..d
    };
    c.validate()?;
    Ok((c, file.resolve(args.precision, "precision", Precision::F64)?))
}

pub fn dispatch(cli: &Cli, file: &ConfigFile) -> Result<(), CliError> {
    let threads = threads(cli, file)?;
    match &cli.command {
        Command::BuildGraph { corpus, out, seed, build, ablation } => {
            let plan = build_plan(file, build, ablation, *seed)?;
            log::info!("resolved configuration: {}", json!({ "command": "build-graph", "corpus": corpus, "out": out, "build": plan.to_json() }));
            build_graph_cmd(&plan, corpus, out)
        }
        Command::Train { graph, seed, model, train, ablation, json, save_model } => {
            let mc = model_config(file, model, ablation)?;
            let (tc, precision) = train_config(file, train, *seed)?;
            log::info!(
                "resolved configuration: {}",
                json!({ "command": "train", "graph": graph, "model": mc, "train": tc, "precision": precision.as_str(), "threads": threads })
            );
            let g = load_graph(graph)?;
            let summary = match precision {
                Precision::F32 => train_cmd::<f32>(&g, &mc, &tc, threads, save_model.as_deref())?,
                Precision::F64 => train_cmd::<f64>(&g, &mc, &tc, threads, save_model.as_deref())?,
            };
            print_summary(&mc, &summary);
            if let Some(path) = json {
                write_reports(path, &summary)?;
            }
            Ok(())
        }
        Command::Eval { graph, model_file, precision } => {
            let precision = file.resolve(*precision, "precision", Precision::F64)?;
            log::info!(
                "resolved configuration: {}",
                json!({ "command": "eval", "graph": graph, "model_file": model_file, "precision": precision.as_str() })
            );
            let g = load_graph(graph)?;
            let text = std::fs::read_to_string(model_file).map_err(|e| io_err(model_file, e))?;
            let saved: SavedModel<f64> =
                serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", model_file.display())))?;
            match precision {
                Precision::F32 => eval_cmd::<f32>(&g, &saved),
                Precision::F64 => eval_cmd::<f64>(&g, &saved),
            }
        }
        Command::Sweep { corpus, seed, lo, hi, build, model, train, ablation, json } => {
            let plan = build_plan(file, build, ablation, *seed)?;
            let mc = model_config(file, model, ablation)?;
            let (tc, precision) = train_config(file, train, *seed)?;
            let lo = file.resolve(*lo, "lo", Range(Some((3, 6))))?.0;
            let hi = file.resolve(*hi, "hi", Range(Some((3, 6))))?.0;
            let (Some(lo), Some(hi)) = (lo, hi) else {
                return Err(CliError::Usage("--lo and --hi need MIN:MAX ranges".into()));
            };
            if plan.stats.char_ngrams.is_none() {
                return Err(CliError::Usage("sweep varies character n-grams; they cannot be disabled".into()));
            }
            log::info!(
                "resolved configuration: {}",
                json!({
                    "command": "sweep", "corpus": corpus, "build": plan.to_json(), "model": mc, "train": tc,
                    "precision": precision.as_str(), "lo": [lo.0, lo.1], "hi": [hi.0, hi.1], "threads": threads,
                })
            );
            let c = plan.corpus(corpus)?;
            let lo: Vec<usize> = (lo.0..=lo.1).collect();
            let hi: Vec<usize> = (hi.0..=hi.1).collect();
            let grid = match precision {
                Precision::F32 => sweep_char_ngrams::<f32>(&c, &plan.stats, &mc, &tc, &lo, &hi, threads)?,
                Precision::F64 => sweep_char_ngrams::<f64>(&c, &plan.stats, &mc, &tc, &lo, &hi, threads)?,
            };
            print!("{}", grid.to_table("lo\\hi"));
            match json {
                Some(path) => std::fs::write(path, grid.to_json_lines()).map_err(|e| io_err(path, e))?,
                None => {
                    println!();
                    print!("{}", grid.to_json_lines());
                }
            }
            Ok(())
        }
        Command::Inspect { graph, node } => {
            log::info!("resolved configuration: {}", json!({ "command": "inspect", "graph": graph, "node": node }));
            let g = load_graph(graph)?;
            print!("{}", inspect(&g, node)?);
            Ok(())
        }
    }
}

fn build_graph_cmd(plan: &BuildPlan, corpus: &Path, out: &Path) -> Result<(), CliError> {
    let c = plan.corpus(corpus)?;
    let g = build_graph(&c, &compute_stats(&c, &plan.stats)?)?;
    save_graph(&g, out)?;
    println!("node_type\tcount");
    for t in NodeType::ALL {
        println!("{t}\t{}", g.count(t));
    }
    println!("edge_type\tcount");
    for et in EdgeType::ALL {
        println!("{et}\t{}", g.edges(et).len());
    }
    println!(
        "split\tdocs\ntrain\t{}\nval\t{}\ntest\t{}",
        g.docs_in(Split::Train).len(),
        g.docs_in(Split::Val).len(),
        g.docs_in(Split::Test).len()
    );
    Ok(())
}

fn to_f64<S: Scalar>(p: &ParamStore<S>) -> ParamStore<f64> {
    ParamStore {
        names: p.names.clone(),
        values: p.values.iter().map(|m| m.cast()).collect(),
    }
}

fn train_cmd<S: Scalar>(
    graph: &HetGraph,
    mc: &ModelConfig,
    tc: &TrainConfig,
    threads: usize,
    save: Option<&Path>,
) -> Result<RunSummary, CliError> {
    let model = build_model::<S>(graph, mc)?;
    let Some(path) = save else {
        return Ok(run_many_with(model.as_ref(), tc, threads)?);
    };
    // first run trained directly so its parameters can be kept
    let (first, params) = train_model(model.as_ref(), tc)?;
    let saved = SavedModel {
        model: mc.clone(),
        classes: graph.classes(),
        params: to_f64(&params),
    };
    let text = serde_json::to_string(&saved).map_err(|e| CliError::Data(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| io_err(path, e))?;
    let mut reports = vec![first];
    if tc.runs > 1 {
        let rest = TrainConfig { seed: tc.seed + 1, runs: tc.runs - 1, ..tc.clone() };
        reports.extend(run_many_with(model.as_ref(), &rest, threads)?.reports);
    }
    let accs: Vec<f64> = reports.iter().map(|r| r.test_acc).collect();
    let (mean, std) = mean_std(&accs);
    Ok(RunSummary { mean, std, reports })
}

fn print_summary(mc: &ModelConfig, s: &RunSummary) {
    for (i, r) in s.reports.iter().enumerate() {
        println!(
            "run {}\tseed {}\tbest_epoch {}\tepochs {}\tval_acc {:.4}\ttest_acc {:.4}\t{:.1}s",
            i + 1,
            r.seed,
            r.best_epoch,
            r.last_epoch(),
            r.best_val_acc,
            r.test_acc,
            r.wall_time_secs
        );
    }
    println!("{} test accuracy (%) over {} runs: {}", mc.model.as_str(), s.reports.len(), s.display());
}

fn write_reports(path: &Path, s: &RunSummary) -> Result<(), CliError> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(f);
    for r in &s.reports {
        let line = serde_json::to_string(r).map_err(|e| CliError::Data(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn eval_cmd<S: Scalar>(graph: &HetGraph, saved: &SavedModel<f64>) -> Result<(), CliError> {
    let model = build_model::<S>(graph, &saved.model)?;
    let params = saved.params_for(model.as_ref())?;
    let logits = predict(model.as_ref(), &params)?;
    let labels = model.graph().class_ids();
    println!("split\tdocs\taccuracy\tloss");
    for split in [Split::Train, Split::Val, Split::Test] {
        let rows = model.graph().docs_in(split);
        if rows.is_empty() {
            continue;
        }
        let (loss, acc) = score(&logits, &labels, &rows)?;
        println!("{split}\t{}\t{acc:.4}\t{loss:.4}", rows.len());
    }
    Ok(())
}

fn parse_node(graph: &HetGraph, spec: &str) -> Result<NodeRef, CliError> {
    let bad = || CliError::Usage(format!("--node expects type:index or type=key, got {spec:?}"));
    if let Some((t, idx)) = spec.split_once(':') {
        let t: NodeType = t.parse().map_err(|_| bad())?;
        let index = idx.parse().map_err(|_| bad())?;
        return Ok(NodeRef::new(t, index));
    }
    let (t, key) = spec.split_once('=').ok_or_else(bad)?;
    let t: NodeType = t.parse().map_err(|_| bad())?;
    let index = graph
        .find(t, key)
        .ok_or_else(|| CliError::Data(format!("no {t} node with key {key:?}")))?;
    Ok(NodeRef::new(t, index))
}

fn inspect(graph: &HetGraph, spec: &str) -> Result<String, CliError> {
    let node = parse_node(graph, spec)?;
    let mut groups: BTreeMap<usize, Vec<(NodeRef, f64)>> = BTreeMap::new();
    for (et, other, w) in graph.neighbors(node)? {
        groups.entry(et.index()).or_default().push((other, w));
    }
    let mut out = String::new();
    let _ = writeln!(out, "{node}\t{}", graph.nodes(node.node_type)[node.index]);
    for (et, mut list) in groups {
        list.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let _ = writeln!(out, "{} ({})", EdgeType::ALL[et], list.len());
        for (n, w) in list {
            let _ = writeln!(out, "\t{n}\t{}\t{}", graph.nodes(n.node_type)[n.index], format_weight(w));
        }
    }
    Ok(out)
}
