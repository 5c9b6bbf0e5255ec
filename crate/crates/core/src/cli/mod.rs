//! Command-line entry point.
//!
//! Exit status: 0 on success, 1 on usage or configuration errors, 2 on
//! data errors. Every report starts with the resolved configuration and the
//! SHA-256 of each input file, and contains nothing run-dependent beyond
//! what the seed determines.

pub mod experiment;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{adjacency_stats, build_vocab, corpus_summary, AdjacencyMode};
use crate::error::{Error, Result};
use crate::eval::{metrics_table, repeat_runs, MetricsReport, Table};
use crate::gradsuite::{model_check, op_suite, GradRow};
use crate::model::Variant;
use crate::numkernel::ModelParams;
use crate::synth::{generate_corpus, SynthConfig};
use crate::temprec::{effective_diversity_weight, W_NAME};
use crate::training::TrainConfig;
use experiment::{
    evaluate_params, load_inputs, make_splits, parse_split, run_experiment, sha256_hex, significance_table, Inputs,
};

/// Maximum relative error accepted by `grad-check`.
pub const GRAD_TOLERANCE: f64 = 1e-3;

#[derive(Parser, Debug)]
#[command(
    name = "diversirec",
    version,
    about = "Sequential news recommendation experiments",
    disable_help_subcommand = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse a corpus, report counts and warnings, write the vocabulary.
    Ingest(IngestArgs),
    /// Corpus summary and adjacent/random click similarity ratios.
    Stats(StatsArgs),
    /// Train a model, keep the best-validation checkpoint, score the test split.
    Train(TrainArgs),
    /// Score a split with a stored checkpoint.
    Eval(EvalArgs),
    /// Train TempRec for each recent-window size K.
    SweepK(SweepArgs),
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
    /// Finite-difference gradient checks of every operation and model.
    GradCheck(GradArgs),
    /// Train and score one variant under several history orderings.
    PerturbExperiment(PerturbArgs),
}

#[derive(Args, Debug, Clone)]
pub struct InputArgs {
    /// news.tsv in MIND layout
    #[arg(long, value_name = "FILE")]
    pub news: PathBuf,
    /// behaviors.tsv in MIND layout
    #[arg(long, value_name = "FILE")]
    pub behaviors: PathBuf,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ModelFlags {
    /// File of `key = value` lines; flags override it
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for all randomness [default: 42]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training epochs [default: none, must be set here or in --config]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// nrms_plain, nrms_pos, nrms_causal, lstur or temprec [default: temprec]
    #[arg(long)]
    pub variant: Option<String>,
    /// Negatives per positive, S [default: 4]
    #[arg(long = "neg", value_name = "S")]
    pub neg: Option<usize>,
    /// History order: identity, inverse or shuffle [default: identity]
    #[arg(long)]
    pub order: Option<String>,
    /// Worker threads for evaluation; 1 keeps runs reproducible [default: 1]
    #[arg(long)]
    pub threads: Option<usize>,
    /// Split boundaries VALID_START,TEST_START [default: test = last 7 days, valid = the day before]
    #[arg(long, value_name = "VALID_START,TEST_START")]
    pub split: Option<String>,
    /// Pretrained word vectors, one `word v1 .. vD` per line
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
    /// Directory for reports and checkpoints
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Minimum token count for the vocabulary [default: 2]
    #[arg(long)]
    pub min_count: Option<usize>,
    /// Directory for the report and vocab.tsv
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Random click pairs sampled for the random ratios [default: 100000]
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Seed for pair sampling [default: 42]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for the report
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelFlags,
    /// Recent-interest window K [default: 3]
    #[arg(long)]
    pub k: Option<usize>,
    /// Independent runs with seeds seed, seed+1, .. [default: 1]
    #[arg(long)]
    pub runs: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Checkpoint written by `train`
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Model configuration [default: config.txt next to the checkpoint]
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Split to score: train, valid or test [default: test]
    #[arg(long, value_name = "SPLIT")]
    pub on: Option<String>,
    /// History order: identity, inverse or shuffle [default: from the config]
    #[arg(long)]
    pub order: Option<String>,
    /// Worker threads [default: 1]
    #[arg(long)]
    pub threads: Option<usize>,
    /// Split boundaries VALID_START,TEST_START [default: test = last 7 days, valid = the day before]
    #[arg(long, value_name = "VALID_START,TEST_START")]
    pub split: Option<String>,
    /// Directory for the report
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelFlags,
    /// Comma-separated window sizes [default: 1,2,3,5,7,10]
    #[arg(long, value_name = "LIST")]
    pub k: Option<String>,
    /// Runs per K [default: 5]
    #[arg(long)]
    pub runs: Option<usize>,
    /// Paired t-test over matched seeds instead of Welch
    #[arg(long)]
    pub paired: bool,
}

#[derive(Args, Debug)]
pub struct PerturbArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelFlags,
    /// Recent-interest window K [default: 3]
    #[arg(long)]
    pub k: Option<usize>,
    /// Comma-separated orders [default: identity,inverse,shuffle]
    #[arg(long, value_name = "LIST")]
    pub orders: Option<String>,
    /// Runs per order [default: 5]
    #[arg(long)]
    pub runs: Option<usize>,
    /// Paired t-test over matched seeds instead of Welch
    #[arg(long)]
    pub paired: bool,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Directory receiving news.tsv and behaviors.tsv
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Users [default: 200]
    #[arg(long)]
    pub users: Option<usize>,
    /// News items [default: 600]
    #[arg(long = "n-news")]
    pub n_news: Option<usize>,
    /// Topics [default: 10]
    #[arg(long)]
    pub topics: Option<usize>,
    /// Impressions per user [default: 9]
    #[arg(long)]
    pub impressions: Option<usize>,
    /// Candidates per impression [default: 8]
    #[arg(long)]
    pub candidates: Option<usize>,
    /// Diversity strength delta [default: 2]
    #[arg(long)]
    pub delta: Option<f64>,
    /// True recent window [default: 3]
    #[arg(long = "k-true")]
    pub k_true: Option<usize>,
    /// Spread of user topic affinities [default: 0.25]
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Probability that a title word comes from its topic rather than the shared pool [default: 0.7]
    #[arg(long = "topic-word-prob")]
    pub topic_word_prob: Option<f64>,
    /// Days the impressions span [default: 9]
    #[arg(long)]
    pub days: Option<usize>,
    /// Generator seed [default: 7]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct GradArgs {
    /// Random points per check [default: 5]
    #[arg(long)]
    pub points: Option<usize>,
    /// Seed for points and parameters [default: 42]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Central-difference step [default: 1e-4]
    #[arg(long)]
    pub h: Option<f64>,
    /// Only this model variant (operations are always checked)
    #[arg(long)]
    pub variant: Option<String>,
    /// Directory for the report
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// A rendered experiment report.
#[derive(Clone, Debug, Default)]
pub struct Report {
    pub command: String,
    pub config: Vec<(String, String)>,
    pub inputs: Vec<(String, String)>,
    pub sections: Vec<(String, Table)>,
}

impl Report {
    fn new(command: &str) -> Self {
        Report {
            command: command.to_string(),
            ..Report::default()
        }
    }

    fn header(&self) -> String {
        let mut s = format!("# diversirec {}\n", self.command);
        for (k, v) in &self.config {
            s.push_str(&format!("# config {k} = {v}\n"));
        }
        for (p, h) in &self.inputs {
            s.push_str(&format!("# input {p} sha256={h}\n"));
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = self.header();
        for (title, t) in &self.sections {
            s.push_str(&format!("\n## {title}\n"));
            s.push_str(&t.to_text());
        }
        s
    }

    pub fn to_tsv(&self) -> String {
        let mut s = self.header();
        for (title, t) in &self.sections {
            s.push_str(&format!("## {title}\n"));
            s.push_str(&t.to_tsv());
        }
        s
    }

    fn emit(&self, out: &mut dyn Write, dir: Option<&Path>) -> Result<()> {
        write_out(out, &self.to_text())?;
        if let Some(d) = dir {
            write_file(&d.join("report.txt"), self.to_text().as_bytes())?;
            write_file(&d.join("report.tsv"), self.to_tsv().as_bytes())?;
        }
        Ok(())
    }
}

fn write_out(out: &mut dyn Write, s: &str) -> Result<()> {
    out.write_all(s.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn flag_err(flag: &str, e: Error) -> Error {
    Error::Config(format!("{flag}: {e}"))
}

fn parse_list<T: std::str::FromStr>(flag: &str, s: &str) -> Result<Vec<T>> {
    let items = s
        .split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| Error::Config(format!("{flag}: cannot parse {x:?}")))
        })
        .collect::<Result<Vec<T>>>()?;
    if items.is_empty() {
        return Err(Error::Config(format!("{flag}: empty list")));
    }
    Ok(items)
}

/// Defaults, then the config file, then flags.
pub fn resolve_config(flags: &ModelFlags, k: Option<usize>) -> Result<TrainConfig> {
    let mut c = TrainConfig::default();
    if let Some(p) = &flags.config {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        c.apply_text(&text).map_err(|e| match e {
            Error::Parse { line, msg } => Error::Config(format!("{}, line {line}: {msg}", p.display())),
            other => other,
        })?;
    }
    if let Some(v) = flags.seed {
        c.seed = v;
    }
    if let Some(v) = flags.epochs {
        c.epochs = v;
    }
    if let Some(v) = &flags.variant {
        c.variant = v.parse().map_err(|e| flag_err("--variant", e))?;
    }
    if let Some(v) = flags.neg {
        c.neg = v;
    }
    if let Some(v) = &flags.order {
        c.order = v.parse().map_err(|e| flag_err("--order", e))?;
    }
    if let Some(v) = flags.threads {
        c.threads = v;
    }
    if let Some(v) = k {
        c.k = v;
    }
    c.validate()?;
    Ok(c)
}

fn config_rows(c: &TrainConfig) -> Vec<(String, String)> {
    crate::training::config::CONFIG_KEYS
        .iter()
        .map(|k| (k.to_string(), c.get(k).unwrap_or_default()))
        .collect()
}

fn split_flag(s: &Option<String>) -> Result<Option<(chrono::NaiveDateTime, chrono::NaiveDateTime)>> {
    s.as_deref().map(parse_split).transpose().map_err(|e| flag_err("--split", e))
}

fn two_col(header: (&str, &str), rows: Vec<(String, String)>) -> Table {
    let mut t = Table::new(vec![header.0.to_string(), header.1.to_string()]);
    for (a, b) in rows {
        t.push(vec![a, b]);
    }
    t
}

fn cmd_ingest(a: &IngestArgs, out: &mut dyn Write) -> Result<()> {
    let Inputs { corpus, hashes } = load_inputs(&a.input.news, &a.input.behaviors)?;
    let min_count = a.min_count.unwrap_or(2);
    let vocab = build_vocab(&corpus.news, min_count);
    let mut r = Report::new("ingest");
    r.config.push(("min_count".into(), min_count.to_string()));
    r.inputs = hashes;
    let w = corpus.warnings;
    r.sections.push((
        "corpus".into(),
        two_col(
            ("item", "count"),
            vec![
                ("news".into(), corpus.news.len().to_string()),
                ("impressions".into(), corpus.impressions.len().to_string()),
                ("users".into(), corpus.user_count().to_string()),
                ("vocabulary".into(), vocab.len().to_string()),
                ("duplicate news ids".into(), w.duplicate_news.to_string()),
                ("unresolved history ids".into(), w.unresolved_history.to_string()),
                ("unresolved candidate ids".into(), w.unresolved_candidates.to_string()),
                ("unparseable timestamps".into(), w.unparseable_time.to_string()),
            ],
        ),
    ));
    if let Some(d) = &a.out {
        write_file(&d.join("vocab.tsv"), vocab.to_tsv().as_bytes())?;
    }
    r.emit(out, a.out.as_deref())
}

fn cmd_stats(a: &StatsArgs, out: &mut dyn Write) -> Result<()> {
    let Inputs { corpus, hashes } = load_inputs(&a.input.news, &a.input.behaviors)?;
    let pairs = a.pairs.unwrap_or(100_000);
    let seed = a.seed.unwrap_or(42);
    let mut r = Report::new("stats");
    r.config.push(("pairs".into(), pairs.to_string()));
    r.config.push(("seed".into(), seed.to_string()));
    r.inputs = hashes;
    let s = corpus_summary(&corpus);
    r.sections.push((
        "summary".into(),
        two_col(("statistic", "value"), s.rows().into_iter().map(|(k, v)| (k.to_string(), v)).collect()),
    ));
    let mut t = Table::new(vec!["pairs".into(), "ratio".into()]);
    for mode in AdjacencyMode::ALL {
        let v = match adjacency_stats(&corpus, mode, pairs, seed) {
            Ok(x) => format!("{:.2}%", 100.0 * x),
            Err(Error::UndefinedRatio(why)) => format!("undefined ({why})"),
            Err(e) => return Err(e),
        };
        t.push(vec![mode.to_string(), v]);
    }
    r.sections.push(("similar click pairs".into(), t));
    r.emit(out, a.out.as_deref())
}

fn trace_table(run: &experiment::RunOutput) -> Table {
    let mut t = Table::new(
        ["epoch", "train_loss", "samples", "valid_AUC", "valid_MRR", "valid_nDCG@5", "valid_nDCG@10"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    );
    for e in &run.outcome.trace {
        let mut row = vec![e.epoch.to_string(), format!("{:.6}", e.loss), e.samples.to_string()];
        match &e.valid {
            Some(v) => row.extend(v.values().iter().map(|x| format!("{x:.4}"))),
            None => row.extend(std::iter::repeat_n(String::from("-"), 4)),
        }
        t.push(row);
    }
    t
}

fn learned_w(params: &ModelParams<f32>) -> Option<f64> {
    params.get(W_NAME).map(|t| t.values()[0] as f64)
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = resolve_config(&a.model, a.k)?;
    let runs = a.runs.unwrap_or(1);
    if runs == 0 {
        return Err(Error::Config("--runs must be positive".into()));
    }
    let split = split_flag(&a.model.split)?;
    let Inputs { corpus, mut hashes } = load_inputs(&a.input.news, &a.input.behaviors)?;
    if let Some(p) = &a.model.embeddings {
        hashes.push((p.display().to_string(), experiment::sha256_file(p)?));
    }
    let splits = make_splits(&corpus, split)?;
    let dir = a.model.out.as_deref();
    let mut r = Report::new("train");
    r.config = config_rows(&cfg);
    r.config.push(("runs".into(), runs.to_string()));
    r.inputs = hashes;

    let one = |c: &TrainConfig, ckpt: &str| -> Result<experiment::RunOutput> {
        let run = run_experiment(&corpus, &splits, c, a.model.embeddings.as_deref())?;
        if let Some(d) = dir {
            let bytes = run.outcome.params.to_checkpoint_bytes();
            write_file(&d.join(ckpt), &bytes)?;
        }
        Ok(run)
    };

    if runs == 1 {
        let run = one(&cfg, "model.ckpt")?;
        let mut info = vec![
            ("train impressions".to_string(), splits.train.len().to_string()),
            ("valid impressions".to_string(), splits.valid.len().to_string()),
            ("test impressions".to_string(), splits.test.len().to_string()),
            ("best epoch".to_string(), run.outcome.best_epoch.to_string()),
        ];
        if let Some(w) = learned_w(&run.outcome.params) {
            info.push(("w".into(), format!("{w:.6}")));
            info.push(("max(w,0)".into(), format!("{:.6}", effective_diversity_weight(w))));
        }
        if let Some(d) = dir {
            info.push((
                "checkpoint sha256".into(),
                sha256_hex(&run.outcome.params.to_checkpoint_bytes()),
            ));
            write_file(&d.join("config.txt"), cfg.to_text().as_bytes())?;
            write_file(&d.join("trace.tsv"), trace_table(&run).to_tsv().as_bytes())?;
        }
        r.sections.push(("run".into(), two_col(("item", "value"), info)));
        r.sections.push(("trace".into(), trace_table(&run)));
        r.sections.push((
            "test".into(),
            metrics_table("model", &[(cfg.variant.to_string(), run.test.clone())]),
        ));
    } else {
        let mut ws = Vec::new();
        let rep = repeat_runs(runs, cfg.seed, |seed| {
            let c = TrainConfig { seed, ..cfg.clone() };
            let run = one(&c, &format!("model-seed{seed}.ckpt"))?;
            ws.push((seed, learned_w(&run.outcome.params)));
            Ok(run.test)
        })?;
        if let Some(d) = dir {
            write_file(&d.join("config.txt"), cfg.to_text().as_bytes())?;
        }
        r.sections.push(("test".into(), metrics_table("model", &[(cfg.variant.to_string(), rep)])));
        if ws.iter().any(|(_, w)| w.is_some()) {
            let rows = ws
                .into_iter()
                .map(|(s, w)| (s.to_string(), format!("{:.6}", effective_diversity_weight(w.unwrap_or(0.0)))))
                .collect();
            r.sections.push(("learned max(w,0)".into(), two_col(("seed", "max(w,0)"), rows)));
        }
    }
    r.emit(out, dir)
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let cfg_path = match &a.config {
        Some(p) => p.clone(),
        None => a.checkpoint.parent().unwrap_or(Path::new(".")).join("config.txt"),
    };
    let mut cfg = TrainConfig::default();
    let text = std::fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    cfg.apply_text(&text).map_err(|e| e.in_file(&cfg_path))?;
    if let Some(o) = &a.order {
        cfg.order = o.parse().map_err(|e| flag_err("--order", e))?;
    }
    if let Some(t) = a.threads {
        cfg.threads = t;
    }
    cfg.validate()?;
    let on = a.on.clone().unwrap_or_else(|| "test".into());
    let split = split_flag(&a.split)?;
    let Inputs { corpus, mut hashes } = load_inputs(&a.input.news, &a.input.behaviors)?;
    let params = ModelParams::<f32>::load(&a.checkpoint)?;
    hashes.push((
        a.checkpoint.display().to_string(),
        sha256_hex(&params.to_checkpoint_bytes()),
    ));
    let splits = make_splits(&corpus, split)?;
    let idx = match on.as_str() {
        "train" => &splits.train,
        "valid" => &splits.valid,
        "test" => &splits.test,
        other => return Err(Error::Config(format!("--on: unknown split {other:?}"))),
    };
    let report = evaluate_params(&corpus, &splits, idx, &cfg, &params)?;
    let mut r = Report::new("eval");
    r.config = config_rows(&cfg);
    r.config.push(("on".into(), on.clone()));
    r.inputs = hashes;
    r.sections.push((on, metrics_table("model", &[(cfg.variant.to_string(), report)])));
    r.emit(out, a.out.as_deref())
}

fn repeated(
    corpus: &crate::data::Corpus,
    splits: &crate::data::Splits,
    cfg: &TrainConfig,
    runs: usize,
    embeddings: Option<&Path>,
) -> Result<(MetricsReport, Vec<Option<f64>>)> {
    let mut ws = Vec::new();
    let mut once = |seed: u64| -> Result<MetricsReport> {
        let c = TrainConfig { seed, ..cfg.clone() };
        let run = run_experiment(corpus, splits, &c, embeddings)?;
        ws.push(learned_w(&run.outcome.params));
        Ok(run.test)
    };
    let rep = if runs == 1 {
        once(cfg.seed)?
    } else {
        repeat_runs(runs, cfg.seed, &mut once)?
    };
    Ok((rep, ws))
}

fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = resolve_config(&a.model, None)?;
    if a.model.variant.is_none() {
        cfg.variant = Variant::TempRec;
    }
    if cfg.variant != Variant::TempRec {
        return Err(Error::Config("--variant: sweep-k applies to temprec only".into()));
    }
    let ks: Vec<usize> = parse_list("--k", a.k.as_deref().unwrap_or("1,2,3,5,7,10"))?;
    if ks.contains(&0) {
        return Err(Error::Config("--k: window sizes must be positive".into()));
    }
    let runs = a.runs.unwrap_or(5);
    if runs == 0 {
        return Err(Error::Config("--runs must be positive".into()));
    }
    let split = split_flag(&a.model.split)?;
    let Inputs { corpus, hashes } = load_inputs(&a.input.news, &a.input.behaviors)?;
    let splits = make_splits(&corpus, split)?;
    let mut rows = Vec::new();
    let mut wrows = Vec::new();
    for &k in &ks {
        let c = TrainConfig { k, ..cfg.clone() };
        let (rep, ws) = repeated(&corpus, &splits, &c, runs, a.model.embeddings.as_deref())?;
        let mean_w = ws.iter().map(|w| effective_diversity_weight(w.unwrap_or(0.0))).sum::<f64>() / ws.len() as f64;
        wrows.push((format!("K={k}"), format!("{mean_w:.6}")));
        rows.push((format!("K={k}"), rep));
    }
    let best = rows
        .iter()
        .enumerate()
        .fold(0, |b, (i, (_, r))| if r.auc > rows[b].1.auc { i } else { b });
    let mut summary = Table::new(vec!["K".into(), "mean AUC".into(), "best".into(), "default".into()]);
    for (i, (&k, (_, r))) in ks.iter().zip(&rows).enumerate() {
        summary.push(vec![
            k.to_string(),
            format!("{:.4}", r.auc),
            if i == best { "*".into() } else { String::new() },
            if k == TrainConfig::default().k { "*".into() } else { String::new() },
        ]);
    }
    let mut r = Report::new("sweep-k");
    r.config = config_rows(&cfg);
    r.config.retain(|(k, _)| k != "k");
    r.config.push(("k".into(), ks.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",")));
    r.config.push(("runs".into(), runs.to_string()));
    r.config.push(("test".into(), if a.paired { "paired" } else { "welch" }.into()));
    r.inputs = hashes;
    r.sections.push(("metrics".into(), metrics_table("K", &rows)));
    r.sections.push(("AUC by K".into(), summary));
    r.sections.push(("mean learned max(w,0)".into(), two_col(("K", "max(w,0)"), wrows)));
    if runs >= 2 {
        let base_k = if ks.contains(&TrainConfig::default().k) { TrainConfig::default().k } else { ks[0] };
        let base = rows.iter().find(|(l, _)| *l == format!("K={base_k}")).cloned().expect("baseline row");
        r.sections.push(("significance".into(), significance_table(&base, &rows, a.paired)));
    }
    r.emit(out, a.model.out.as_deref())
}

fn cmd_perturb(a: &PerturbArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = resolve_config(&a.model, a.k)?;
    let orders: Vec<crate::encoders::OrderMode> =
        parse_list("--orders", a.orders.as_deref().unwrap_or("identity,inverse,shuffle"))?;
    let runs = a.runs.unwrap_or(5);
    if runs == 0 {
        return Err(Error::Config("--runs must be positive".into()));
    }
    let split = split_flag(&a.model.split)?;
    let Inputs { corpus, hashes } = load_inputs(&a.input.news, &a.input.behaviors)?;
    let splits = make_splits(&corpus, split)?;
    let mut rows = Vec::new();
    for &o in &orders {
        let c = TrainConfig { order: o, ..cfg.clone() };
        let (rep, _) = repeated(&corpus, &splits, &c, runs, a.model.embeddings.as_deref())?;
        rows.push((format!("{} ({o})", cfg.variant), rep));
    }
    let mut r = Report::new("perturb-experiment");
    r.config = config_rows(&cfg);
    r.config.retain(|(k, _)| k != "order");
    r.config.push((
        "orders".into(),
        orders.iter().map(|o| o.to_string()).collect::<Vec<_>>().join(","),
    ));
    r.config.push(("runs".into(), runs.to_string()));
    r.config.push(("test".into(), if a.paired { "paired" } else { "welch" }.into()));
    r.inputs = hashes;
    r.sections.push(("metrics".into(), metrics_table("model (order)", &rows)));
    if runs >= 2 && rows.len() >= 2 {
        r.sections.push(("significance".into(), significance_table(&rows[0].clone(), &rows, a.paired)));
    }
    r.emit(out, a.model.out.as_deref())
}

fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        n_users: a.users.unwrap_or(d.n_users),
        n_news: a.n_news.unwrap_or(d.n_news),
        n_topics: a.topics.unwrap_or(d.n_topics),
        impressions_per_user: a.impressions.unwrap_or(d.impressions_per_user),
        candidates: a.candidates.unwrap_or(d.candidates),
        delta: a.delta.unwrap_or(d.delta),
        k_true: a.k_true.unwrap_or(d.k_true),
        preference_sigma: a.sigma.unwrap_or(d.preference_sigma),
        topic_word_prob: a.topic_word_prob.unwrap_or(d.topic_word_prob),
        days: a.days.unwrap_or(d.days),
        seed: a.seed.unwrap_or(d.seed),
        ..d
    };
    let g = generate_corpus(&cfg)?;
    let news = a.out.join("news.tsv");
    let beh = a.out.join("behaviors.tsv");
    write_file(&news, g.news_tsv.as_bytes())?;
    write_file(&beh, g.behaviors_tsv.as_bytes())?;
    let mut r = Report::new("synth");
    r.config = vec![
        ("users".into(), cfg.n_users.to_string()),
        ("n_news".into(), cfg.n_news.to_string()),
        ("topics".into(), cfg.n_topics.to_string()),
        ("words_per_topic".into(), cfg.words_per_topic.to_string()),
        ("shared_words".into(), cfg.shared_words.to_string()),
        ("topic_word_prob".into(), cfg.topic_word_prob.to_string()),
        ("title_len".into(), format!("{}..{}", cfg.title_len.0, cfg.title_len.1)),
        ("history_len".into(), format!("{}..{}", cfg.history_len.0, cfg.history_len.1)),
        ("impressions".into(), cfg.impressions_per_user.to_string()),
        ("candidates".into(), cfg.candidates.to_string()),
        ("sigma".into(), cfg.preference_sigma.to_string()),
        ("delta".into(), cfg.delta.to_string()),
        ("k_true".into(), cfg.k_true.to_string()),
        ("days".into(), cfg.days.to_string()),
        ("seed".into(), cfg.seed.to_string()),
    ];
    r.sections.push((
        "outputs".into(),
        two_col(
            ("file", "sha256"),
            vec![
                (news.display().to_string(), sha256_hex(g.news_tsv.as_bytes())),
                (beh.display().to_string(), sha256_hex(g.behaviors_tsv.as_bytes())),
            ],
        ),
    ));
    r.emit(out, Some(&a.out))
}

fn grad_table(rows: &[GradRow]) -> Table {
    let mut t = Table::new(
        ["check", "points", "coordinates", "max_rel_error", "result"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    );
    for r in rows {
        t.push(vec![
            r.name.clone(),
            r.points.to_string(),
            r.coordinates.to_string(),
            format!("{:.3e}", r.max_rel_error),
            if r.max_rel_error < GRAD_TOLERANCE { "pass" } else { "FAIL" }.into(),
        ]);
    }
    t
}

fn cmd_grad(a: &GradArgs, out: &mut dyn Write) -> Result<bool> {
    let points = a.points.unwrap_or(5);
    let seed = a.seed.unwrap_or(42);
    let h = a.h.unwrap_or(crate::gradsuite::DEFAULT_STEP);
    let variants = match &a.variant {
        Some(v) => vec![v.parse::<Variant>().map_err(|e| flag_err("--variant", e))?],
        None => Variant::ALL.to_vec(),
    };
    let ops = op_suite(seed, points, h)?;
    let models = variants
        .iter()
        .map(|&v| model_check(v, seed, points, h))
        .collect::<Result<Vec<_>>>()?;
    let mut r = Report::new("grad-check");
    r.config = vec![
        ("points".into(), points.to_string()),
        ("seed".into(), seed.to_string()),
        ("h".into(), h.to_string()),
        ("tolerance".into(), GRAD_TOLERANCE.to_string()),
    ];
    r.sections.push(("operations".into(), grad_table(&ops)));
    r.sections.push(("models".into(), grad_table(&models)));
    r.emit(out, a.out.as_deref())?;
    Ok(ops.iter().chain(&models).all(|g| g.max_rel_error < GRAD_TOLERANCE))
}

fn dispatch(cmd: &Command, out: &mut dyn Write) -> Result<bool> {
    match cmd {
        Command::Ingest(a) => cmd_ingest(a, out).map(|_| true),
        Command::Stats(a) => cmd_stats(a, out).map(|_| true),
        Command::Train(a) => cmd_train(a, out).map(|_| true),
        Command::Eval(a) => cmd_eval(a, out).map(|_| true),
        Command::SweepK(a) => cmd_sweep(a, out).map(|_| true),
        Command::Synth(a) => cmd_synth(a, out).map(|_| true),
        Command::GradCheck(a) => cmd_grad(a, out),
        Command::PerturbExperiment(a) => cmd_perturb(a, out).map(|_| true),
    }
}

/// Runs the command line `args` (including the program name) and returns
/// the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    1
                }
            };
        }
    };
    match dispatch(&cli.command, out) {
        Ok(true) => 0,
        Ok(false) => {
            let _ = writeln!(err, "error: gradient check exceeded tolerance {GRAD_TOLERANCE}");
            2
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                Error::Config(_) | Error::Parameter(_) => 1,
                _ => 2,
            }
        }
    }
}
