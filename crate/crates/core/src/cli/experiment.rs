//! Building blocks shared by the subcommands: input loading with content
//! hashes, split resolution and full train-then-test runs.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use sha2::{Digest, Sha256};

use crate::data::{chronological_split, default_boundaries, parse_time, read_pretrained, Corpus, Splits};
use crate::error::{Error, Result};
use crate::eval::{evaluate, paired_t_test, welch_t_test, MetricsReport, Table, SIGNIFICANCE};
use crate::model::Recommender;
use crate::numkernel::ModelParams;
use crate::training::{initial_params, train, FrozenModel, Prepared, TrainConfig, TrainOutcome};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// A parsed corpus with the content hash of each input file.
#[derive(Clone, Debug)]
pub struct Inputs {
    pub corpus: Corpus,
    /// `(path as given, sha256)` pairs.
    pub hashes: Vec<(String, String)>,
}

pub fn load_inputs(news: &Path, behaviors: &Path) -> Result<Inputs> {
    let corpus = Corpus::from_files(news, behaviors)?;
    Ok(Inputs {
        corpus,
        hashes: vec![
            (news.display().to_string(), sha256_file(news)?),
            (behaviors.display().to_string(), sha256_file(behaviors)?),
        ],
    })
}

/// Accepts `YYYY-MM-DD`, `YYYY-MM-DDTHH:MM:SS` or the behaviors-file format.
pub fn parse_datetime(s: &str) -> Result<NaiveDateTime> {
    let s = s.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight exists"));
    }
    if let Ok(t) = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S") {
        return Ok(t);
    }
    parse_time(s).ok_or_else(|| Error::Config(format!("cannot read {s:?} as a date or time")))
}

/// Parses `valid_start,test_start`.
pub fn parse_split(s: &str) -> Result<(NaiveDateTime, NaiveDateTime)> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| Error::Config(format!("--split expects VALID_START,TEST_START, got {s:?}")))?;
    Ok((parse_datetime(a)?, parse_datetime(b)?))
}

/// Explicit boundaries, or the last week as test and the day before it as
/// validation.
pub fn make_splits(corpus: &Corpus, split: Option<(NaiveDateTime, NaiveDateTime)>) -> Result<Splits> {
    let (v, t) = match split {
        Some(b) => b,
        None => default_boundaries(&corpus.impressions)
            .ok_or_else(|| Error::Config("no impression has a readable timestamp".into()))?,
    };
    let s = chronological_split(&corpus.impressions, v, t)?;
    if s.train.is_empty() {
        return Err(Error::Config(format!("no impressions before the validation start {v}")));
    }
    Ok(s)
}

/// Result of one train-then-test cycle.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub prepared: Prepared,
    pub outcome: TrainOutcome,
    pub test: MetricsReport,
}

/// Trains on `splits.train`, selects on `splits.valid` and scores
/// `splits.test`.
pub fn run_experiment(corpus: &Corpus, splits: &Splits, cfg: &TrainConfig, embeddings: Option<&Path>) -> Result<RunOutput> {
    cfg.validate()?;
    if splits.test.is_empty() {
        return Err(Error::Config("test split is empty".into()));
    }
    let prepared = Prepared::new(corpus, &splits.train, cfg.min_count, cfg.l_max);
    let model = Recommender::new(prepared.model_config(cfg))?;
    let pretrained = match embeddings {
        Some(p) => {
            let f = File::open(p).map_err(|e| Error::io(p, e))?;
            Some(read_pretrained(BufReader::new(f), &prepared.vocab, cfg.word_dim).map_err(|e| e.in_file(p))?)
        }
        None => None,
    };
    let init = initial_params(&model, cfg, pretrained.as_deref())?;
    let tr = prepared.resolve(corpus, &splits.train, cfg.n_max, cfg.order, cfg.seed);
    let va = prepared.resolve(corpus, &splits.valid, cfg.n_max, cfg.order, cfg.seed);
    let te = prepared.resolve(corpus, &splits.test, cfg.n_max, cfg.order, cfg.seed);
    let outcome = train(cfg, &model, &prepared.titles, &tr, &va, init)?;
    let frozen = FrozenModel::new(&outcome.model, &outcome.params, &prepared.titles, cfg.threads)?;
    let test = evaluate(&frozen, &te, cfg.threads)?;
    Ok(RunOutput {
        prepared,
        outcome,
        test,
    })
}

/// Scores impressions `idx` with a stored parameter set.
pub fn evaluate_params(
    corpus: &Corpus,
    splits: &Splits,
    idx: &[usize],
    cfg: &TrainConfig,
    params: &ModelParams<f32>,
) -> Result<MetricsReport> {
    let prepared = Prepared::new(corpus, &splits.train, cfg.min_count, cfg.l_max);
    let model = Recommender::new(prepared.model_config(cfg))?;
    model.check_params(params)?;
    let imps = prepared.resolve(corpus, idx, cfg.n_max, cfg.order, cfg.seed);
    let frozen = FrozenModel::new(&model, params, &prepared.titles, cfg.threads)?;
    evaluate(&frozen, &imps, cfg.threads)
}

/// AUC significance of each row against `baseline` over matched runs.
pub fn significance_table(baseline: &(String, MetricsReport), rows: &[(String, MetricsReport)], paired: bool) -> Table {
    let mut t = Table::new(
        ["comparison", "test", "t", "df", "p", "significant"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    );
    let base = baseline.1.auc_samples();
    for (label, r) in rows {
        if label == &baseline.0 {
            continue;
        }
        let a = r.auc_samples();
        let res = if paired { paired_t_test(&a, &base) } else { welch_t_test(&a, &base) };
        let test = if paired { "paired" } else { "welch" };
        let mut row = vec![format!("{label} vs {}", baseline.0), test.to_string()];
        match res {
            Some(tt) => {
                row.push(format!("{:.4}", tt.t));
                row.push(format!("{:.2}", tt.df));
                row.push(format!("{:.4}", tt.p));
                row.push(if tt.significant(SIGNIFICANCE) { "yes" } else { "no" }.to_string());
            }
            None => row.extend(["undefined".to_string(), String::new(), String::new(), "no".to_string()]),
        }
        t.push(row);
    }
    t
}
