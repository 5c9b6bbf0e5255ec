//! Python bindings: synthetic corpora, corpus statistics, ranking metrics,
//! significance tests and a train-then-test entry point.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use diversirec as dr;
use dr::cli::experiment::{make_splits, parse_datetime, run_experiment};
use dr::data::{adjacency_stats, corpus_summary, AdjacencyMode};
use dr::temprec::W_NAME;

fn to_py(e: dr::Error) -> PyErr {
    match e {
        dr::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Generator settings for a synthetic click log.
#[pyclass(name = "SynthConfig")]
struct PySynthConfig {
    inner: dr::synth::SynthConfig,
}

#[pymethods]
impl PySynthConfig {
    #[new]
    #[pyo3(signature = (n_users=None, n_news=None, delta=None, k_true=None, seed=None, preference_sigma=None, topic_word_prob=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        n_users: Option<usize>,
        n_news: Option<usize>,
        delta: Option<f64>,
        k_true: Option<usize>,
        seed: Option<u64>,
        preference_sigma: Option<f64>,
        topic_word_prob: Option<f64>,
    ) -> PyResult<Self> {
        let mut c = dr::synth::SynthConfig::default();
        if let Some(v) = n_users {
            c.n_users = v;
        }
        if let Some(v) = n_news {
            c.n_news = v;
        }
        if let Some(v) = delta {
            c.delta = v;
        }
        if let Some(v) = k_true {
            c.k_true = v;
        }
        if let Some(v) = seed {
            c.seed = v;
        }
        if let Some(v) = preference_sigma {
            c.preference_sigma = v;
        }
        if let Some(v) = topic_word_prob {
            c.topic_word_prob = v;
        }
        c.validate().map_err(to_py)?;
        Ok(Self { inner: c })
    }

    #[getter]
    fn n_users(&self) -> usize {
        self.inner.n_users
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }

    #[getter]
    fn k_true(&self) -> usize {
        self.inner.k_true
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    /// Returns `(news_tsv, behaviors_tsv)`.
    fn generate(&self) -> PyResult<(String, String)> {
        let g = dr::synth::generate_corpus(&self.inner).map_err(to_py)?;
        Ok((g.news_tsv, g.behaviors_tsv))
    }

    /// Generates straight into a parsed corpus.
    fn corpus(&self) -> PyResult<PyCorpus> {
        let g = dr::synth::generate_corpus(&self.inner).map_err(to_py)?;
        PyCorpus::from_tsv(&g.news_tsv, &g.behaviors_tsv)
    }
}

/// A parsed news file and behaviors log.
#[pyclass(name = "Corpus")]
struct PyCorpus {
    inner: dr::data::Corpus,
}

#[pymethods]
impl PyCorpus {
    #[staticmethod]
    fn from_tsv(news: &str, behaviors: &str) -> PyResult<Self> {
        Ok(Self {
            inner: dr::data::Corpus::from_tsv(news, behaviors).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_files(news: PathBuf, behaviors: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: dr::data::Corpus::from_files(&news, &behaviors).map_err(to_py)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.impressions.len()
    }

    #[getter]
    fn n_news(&self) -> usize {
        self.inner.news.len()
    }

    #[getter]
    fn n_users(&self) -> usize {
        self.inner.user_count()
    }

    #[getter]
    fn warnings(&self) -> usize {
        self.inner.warnings.total()
    }

    /// Corpus table as a dict of name to value.
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = corpus_summary(&self.inner);
        let d = PyDict::new(py);
        d.set_item("users", s.users)?;
        d.set_item("news", s.news)?;
        d.set_item("impressions", s.impressions)?;
        d.set_item("click_behaviors", s.click_behaviors())?;
        d.set_item("avg_title_len", s.avg_title_len)?;
        d.set_item("avg_click_seq_len", s.avg_click_seq_len)?;
        Ok(d)
    }

    /// Same-category or shared-entity ratio; `mode` is one of
    /// adjacent_category, random_category, adjacent_entity, random_entity.
    #[pyo3(signature = (mode, n_pairs=100_000, seed=0))]
    fn adjacency_ratio(&self, mode: &str, n_pairs: usize, seed: u64) -> PyResult<f64> {
        let m: AdjacencyMode = mode.parse().map_err(to_py)?;
        adjacency_stats(&self.inner, m, n_pairs, seed).map_err(to_py)
    }
}

/// Training hyperparameters, addressed by the same keys as config files.
#[pyclass(name = "TrainConfig")]
struct PyTrainConfig {
    inner: dr::training::TrainConfig,
}

#[pymethods]
impl PyTrainConfig {
    /// Keyword arguments are applied as `key = value` settings.
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut c = Self {
            inner: dr::training::TrainConfig::default(),
        };
        if let Some(kw) = kwargs {
            for (k, v) in kw.iter() {
                let key: String = k.extract()?;
                c.set(&key, &v.str()?.to_string())?;
            }
        }
        Ok(c)
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.inner.set(key, value).map_err(to_py)
    }

    fn get(&self, key: &str) -> Option<String> {
        self.inner.get(key)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py)
    }

    fn __str__(&self) -> String {
        self.inner.to_text()
    }
}

/// Trains on impressions before `valid_start`, selects the epoch on the
/// validation window and scores everything from `test_start` on. Without
/// boundaries the last week is the test set and the day before it
/// validation.
#[pyfunction]
#[pyo3(signature = (corpus, config, valid_start=None, test_start=None))]
fn train_and_test<'py>(
    py: Python<'py>,
    corpus: &PyCorpus,
    config: &PyTrainConfig,
    valid_start: Option<&str>,
    test_start: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let split = match (valid_start, test_start) {
        (Some(v), Some(t)) => Some((parse_datetime(v).map_err(to_py)?, parse_datetime(t).map_err(to_py)?)),
        (None, None) => None,
        _ => return Err(PyValueError::new_err("give both valid_start and test_start or neither")),
    };
    let splits = make_splits(&corpus.inner, split).map_err(to_py)?;
    let out = py
        .detach(|| run_experiment(&corpus.inner, &splits, &config.inner, None))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("auc", out.test.auc)?;
    d.set_item("mrr", out.test.mrr)?;
    d.set_item("ndcg5", out.test.ndcg5)?;
    d.set_item("ndcg10", out.test.ndcg10)?;
    d.set_item("impressions", out.test.impressions)?;
    d.set_item("best_epoch", out.outcome.best_epoch)?;
    d.set_item("losses", out.outcome.trace.iter().map(|e| e.loss).collect::<Vec<_>>())?;
    let w = out.outcome.params.get(W_NAME).map(|t| t.values()[0] as f64);
    d.set_item("w", w)?;
    Ok(d)
}

#[pyfunction]
fn auc(scores: Vec<f64>, labels: Vec<u8>) -> Option<f64> {
    dr::eval::auc_impression(&scores, &labels)
}

#[pyfunction]
fn mrr(scores: Vec<f64>, labels: Vec<u8>) -> Option<f64> {
    dr::eval::mrr_impression(&scores, &labels)
}

#[pyfunction]
fn ndcg(scores: Vec<f64>, labels: Vec<u8>, k: usize) -> Option<f64> {
    dr::eval::ndcg_at_k(&scores, &labels, k)
}

/// `(t, df, p)` of the unequal-variance two-sample test, or None when
/// undefined.
#[pyfunction]
fn welch_t_test(a: Vec<f64>, b: Vec<f64>) -> Option<(f64, f64, f64)> {
    dr::eval::welch_t_test(&a, &b).map(|t| (t.t, t.df, t.p))
}

#[pymodule]
#[pyo3(name = "diversirec")]
fn diversirec_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySynthConfig>()?;
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyTrainConfig>()?;
    m.add_function(wrap_pyfunction!(train_and_test, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(mrr, m)?)?;
    m.add_function(wrap_pyfunction!(ndcg, m)?)?;
    m.add_function(wrap_pyfunction!(welch_t_test, m)?)?;
    Ok(())
}
