//! Ranking metrics, split-level evaluation and significance testing.

pub mod metrics;
pub mod report;
pub mod stats;

use rayon::prelude::*;

pub use metrics::{auc_impression, impression_metrics, mrr_impression, ndcg_at_k, ranking, ImpressionMetrics};
pub use report::Table;
pub use stats::{mean_std, paired_t_test, welch_t_test, TTest, SIGNIFICANCE};

use crate::error::{Error, Result};

/// One impression prepared for scoring: corpus news indices plus labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalImpression {
    /// Clicked news, most recent last.
    pub history: Vec<usize>,
    /// User-ID row (0 when unknown).
    pub user: usize,
    pub candidates: Vec<usize>,
    pub labels: Vec<u8>,
}

/// Anything that scores the candidates of an impression with frozen state.
pub trait ImpressionScorer: Sync {
    fn score(&self, imp: &EvalImpression) -> Result<Vec<f64>>;
}

impl<F> ImpressionScorer for F
where
    F: Fn(&EvalImpression) -> Result<Vec<f64>> + Sync,
{
    fn score(&self, imp: &EvalImpression) -> Result<Vec<f64>> {
        self(imp)
    }
}

/// Metric values of a single run inside a repeated experiment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunMetrics {
    pub seed: u64,
    pub auc: f64,
    pub mrr: f64,
    pub ndcg5: f64,
    pub ndcg10: f64,
}

/// Mean metrics over the scored impressions of a split. For repeated runs
/// the values are means over `runs`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub auc: f64,
    pub mrr: f64,
    pub ndcg5: f64,
    pub ndcg10: f64,
    pub impressions: usize,
    /// Impressions lacking a positive or a negative.
    pub skipped: usize,
    pub runs: Vec<RunMetrics>,
}

pub const METRIC_NAMES: [&str; 4] = ["AUC", "MRR", "nDCG@5", "nDCG@10"];

impl MetricsReport {
    pub fn values(&self) -> [f64; 4] {
        [self.auc, self.mrr, self.ndcg5, self.ndcg10]
    }

    /// Sample standard deviation per metric across runs.
    pub fn std(&self) -> Option<[f64; 4]> {
        if self.runs.len() < 2 {
            return None;
        }
        let col = |f: fn(&RunMetrics) -> f64| mean_std(&self.runs.iter().map(f).collect::<Vec<_>>()).1;
        Some([col(|r| r.auc), col(|r| r.mrr), col(|r| r.ndcg5), col(|r| r.ndcg10)])
    }

    pub fn auc_samples(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.auc).collect()
    }
}

fn score_one<S: ImpressionScorer>(scorer: &S, imp: &EvalImpression) -> Result<Option<ImpressionMetrics>> {
    if imp.candidates.len() != imp.labels.len() {
        return Err(Error::Shape(format!(
            "{} candidates but {} labels",
            imp.candidates.len(),
            imp.labels.len()
        )));
    }
    let has_pos = imp.labels.contains(&1);
    let has_neg = imp.labels.contains(&0);
    if !(has_pos && has_neg) {
        return Ok(None);
    }
    let scores = scorer.score(imp)?;
    if scores.len() != imp.labels.len() {
        return Err(Error::Shape(format!(
            "scorer returned {} scores for {} candidates",
            scores.len(),
            imp.labels.len()
        )));
    }
    Ok(impression_metrics(&scores, &imp.labels))
}

/// Runs `f` on a pool of `threads` workers, or inline when `threads <= 1`.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    if threads <= 1 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Scores every impression and averages the four metrics over those with
/// at least one positive and one negative. The reduction runs in impression
/// order, so the result does not depend on `threads`.
pub fn evaluate<S: ImpressionScorer>(scorer: &S, impressions: &[EvalImpression], threads: usize) -> Result<MetricsReport> {
    if impressions.is_empty() {
        return Err(Error::Config("evaluation split is empty".into()));
    }
    let per: Vec<Option<ImpressionMetrics>> = if threads <= 1 {
        impressions.iter().map(|imp| score_one(scorer, imp)).collect::<Result<_>>()?
    } else {
        with_threads(threads, || {
            impressions
                .par_iter()
                .map(|imp| score_one(scorer, imp))
                .collect::<Result<Vec<_>>>()
        })??
    };
    let mut sums = [0.0f64; 4];
    let mut n = 0usize;
    for m in per.iter().flatten() {
        sums[0] += m.auc;
        sums[1] += m.mrr;
        sums[2] += m.ndcg5;
        sums[3] += m.ndcg10;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Config(format!(
            "none of the {} impressions has both a positive and a negative",
            impressions.len()
        )));
    }
    let k = n as f64;
    Ok(MetricsReport {
        auc: sums[0] / k,
        mrr: sums[1] / k,
        ndcg5: sums[2] / k,
        ndcg10: sums[3] / k,
        impressions: n,
        skipped: impressions.len() - n,
        runs: Vec::new(),
    })
}

/// Runs `run` with seeds `seed, seed + 1, ..` and reports per-metric means
/// with the individual runs attached.
pub fn repeat_runs<F>(n: usize, seed: u64, mut run: F) -> Result<MetricsReport>
where
    F: FnMut(u64) -> Result<MetricsReport>,
{
    if n < 2 {
        return Err(Error::Parameter(format!("repeated runs need n >= 2, got {n}")));
    }
    let mut runs = Vec::with_capacity(n);
    let mut impressions = 0;
    let mut skipped = 0;
    for i in 0..n as u64 {
        let s = seed.wrapping_add(i);
        let r = run(s)?;
        impressions = r.impressions;
        skipped = r.skipped;
        runs.push(RunMetrics {
            seed: s,
            auc: r.auc,
            mrr: r.mrr,
            ndcg5: r.ndcg5,
            ndcg10: r.ndcg10,
        });
    }
    let mean = |f: fn(&RunMetrics) -> f64| mean_std(&runs.iter().map(f).collect::<Vec<_>>()).0;
    Ok(MetricsReport {
        auc: mean(|r| r.auc),
        mrr: mean(|r| r.mrr),
        ndcg5: mean(|r| r.ndcg5),
        ndcg10: mean(|r| r.ndcg10),
        impressions,
        skipped,
        runs,
    })
}

/// Metric table: one row per labelled report, plus per-seed and mean/std
/// rows for repeated experiments.
pub fn metrics_table(first_col: &str, rows: &[(String, MetricsReport)]) -> Table {
    let mut header = vec![first_col.to_string()];
    header.extend(METRIC_NAMES.iter().map(|s| s.to_string()));
    header.push("impressions".into());
    header.push("skipped".into());
    let mut t = Table::new(header);
    let fmt = |v: [f64; 4]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>();
    for (label, r) in rows {
        for run in &r.runs {
            let mut row = vec![format!("{label} seed={}", run.seed)];
            row.extend(fmt([run.auc, run.mrr, run.ndcg5, run.ndcg10]));
            row.push(r.impressions.to_string());
            row.push(r.skipped.to_string());
            t.push(row);
        }
        let mut row = vec![if r.runs.is_empty() { label.clone() } else { format!("{label} mean") }];
        row.extend(fmt(r.values()));
        row.push(r.impressions.to_string());
        row.push(r.skipped.to_string());
        t.push(row);
        if let Some(sd) = r.std() {
            let mut row = vec![format!("{label} std")];
            row.extend(fmt(sd));
            row.push(String::new());
            row.push(String::new());
            t.push(row);
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn imp(labels: Vec<u8>) -> EvalImpression {
        EvalImpression {
            history: vec![],
            user: 0,
            candidates: (0..labels.len()).collect(),
            labels,
        }
    }

    #[test]
    fn label_oracle_is_perfect() {
        let imps = vec![imp(vec![1, 0, 0]), imp(vec![0, 0, 0, 1]), imp(vec![1, 1])];
        let oracle = |i: &EvalImpression| Ok(i.labels.iter().map(|&l| l as f64).collect());
        let r = evaluate(&oracle, &imps, 1).unwrap();
        assert_eq!(r.values(), [1.0; 4]);
        assert_eq!((r.impressions, r.skipped), (2, 1));
        // Reciprocal ranks average over all positives, so two positives
        // ranked first and second give (1 + 1/2) / 2.
        let two = evaluate(&oracle, &[imp(vec![0, 1, 1])], 1).unwrap();
        assert_eq!([two.auc, two.mrr, two.ndcg5], [1.0, 0.75, 1.0]);
    }

    #[test]
    fn constant_scorer_matches_tie_order() {
        // Ties resolve in candidate order, so the positive at index 1 ranks 2nd.
        let imps = vec![imp(vec![0, 1, 0])];
        let flat = |i: &EvalImpression| Ok(vec![0.0; i.labels.len()]);
        let r = evaluate(&flat, &imps, 1).unwrap();
        assert_eq!(r.auc, 0.5);
        assert_eq!(r.mrr, 0.5);
        assert!((r.ndcg5 - 1.0 / 3f64.log2()).abs() < 1e-15);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let imps: Vec<_> = (0..200)
            .map(|i| imp((0..7).map(|j| u8::from((i * 7 + j) % 5 == 0)).collect()))
            .collect();
        let scorer = |i: &EvalImpression| {
            Ok(i.candidates
                .iter()
                .zip(&i.labels)
                .map(|(&c, &l)| ((c * 37 % 11) as f64).sin() + l as f64 * 0.3)
                .collect())
        };
        let a = evaluate(&scorer, &imps, 1).unwrap();
        let b = evaluate(&scorer, &imps, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_split_rejected() {
        let s = |_: &EvalImpression| Ok(vec![]);
        assert!(matches!(evaluate(&s, &[], 1), Err(Error::Config(_))));
        assert!(matches!(evaluate(&s, &[imp(vec![1])], 1), Err(Error::Config(_))));
    }

    #[test]
    fn repeated_runs_aggregate() {
        let r = repeat_runs(3, 10, |seed| {
            let v = (seed - 9) as f64;
            Ok(MetricsReport {
                auc: v,
                mrr: v,
                ndcg5: v,
                ndcg10: v,
                impressions: 4,
                skipped: 0,
                runs: vec![],
            })
        })
        .unwrap();
        assert_eq!(r.auc, 2.0);
        assert_eq!(r.std().unwrap(), [1.0; 4]);
        assert_eq!(r.runs.iter().map(|x| x.seed).collect::<Vec<_>>(), vec![10, 11, 12]);
        assert!(repeat_runs(1, 0, |_| unreachable!()).is_err());
        let flat = repeat_runs(2, 0, |_| {
            Ok(MetricsReport {
                auc: 0.7,
                mrr: 0.4,
                ndcg5: 0.5,
                ndcg10: 0.6,
                impressions: 1,
                skipped: 0,
                runs: vec![],
            })
        })
        .unwrap();
        assert_eq!(flat.std().unwrap(), [0.0; 4]);
    }

    #[test]
    fn table_has_seed_and_summary_rows() {
        let r = repeat_runs(2, 5, |s| {
            Ok(MetricsReport {
                auc: s as f64 / 10.0,
                mrr: 0.1,
                ndcg5: 0.2,
                ndcg10: 0.3,
                impressions: 9,
                skipped: 1,
                runs: vec![],
            })
        })
        .unwrap();
        let t = metrics_table("model", &[("temprec".into(), r)]);
        let tsv = t.to_tsv();
        let lines: Vec<_> = tsv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("temprec seed=5\t0.5000"));
        assert!(lines[3].starts_with("temprec mean\t0.5500"));
        assert!(lines[4].starts_with("temprec std\t0.0707"));
    }
}
