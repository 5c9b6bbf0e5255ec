//! Sample construction, the listwise loss and the training loop.

pub mod config;

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::TrainConfig;

use crate::data::{build_vocab, Corpus, Vocab};
use crate::encoders::{apply_order_perturbation, load_pretrained, splitmix64, ForwardCtx, OrderMode, PAD_ID};
use crate::error::{Error, Result};
use crate::eval::{evaluate, with_threads, EvalImpression, ImpressionScorer, MetricsReport};
use crate::model::{ModelConfig, Recommender};
use crate::numkernel::{adam_step, AdamConfig, AdamState, ModelParams, Real, Tape, Var};
use crate::temprec::W_NAME;

/// One positive with its sampled negatives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainSample {
    /// Clicked news indices, most recent last.
    pub history: Vec<usize>,
    pub positive: usize,
    pub negatives: Vec<usize>,
    pub user: usize,
}

/// Mixes several integers into one seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5EED_u64, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// One sample per clicked candidate. Negatives are drawn without
/// replacement from the non-clicked candidates, or with replacement when
/// fewer than `s` exist. Impressions with no non-clicked candidate yield
/// nothing.
pub fn build_training_samples(imp: &EvalImpression, s: usize, seed: u64) -> Result<Vec<TrainSample>> {
    if s == 0 {
        return Err(Error::Parameter("need at least one negative per sample".into()));
    }
    let negs: Vec<usize> = imp
        .candidates
        .iter()
        .zip(&imp.labels)
        .filter(|(_, &l)| l == 0)
        .map(|(&c, _)| c)
        .collect();
    if negs.is_empty() {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (&c, &l) in imp.candidates.iter().zip(&imp.labels) {
        if l != 1 {
            continue;
        }
        let negatives = if negs.len() >= s {
            negs.choose_multiple(&mut rng, s).copied().collect()
        } else {
            (0..s).map(|_| negs[rng.gen_range(0..negs.len())]).collect()
        };
        out.push(TrainSample {
            history: imp.history.clone(),
            positive: c,
            negatives,
            user: imp.user,
        });
    }
    Ok(out)
}

/// `-log softmax(scores)[0]`, with the maximum subtracted first.
pub fn listwise_softmax_loss(scores: &[f64]) -> f64 {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
    -(scores[0] - m - z.ln())
}

/// Keeps the most recent `n_max` ids and left-pads with [`PAD_ID`]; the
/// mask marks real positions.
pub fn pad_truncate_history(history: &[usize], n_max: usize) -> (Vec<usize>, Vec<bool>) {
    let keep = &history[history.len().saturating_sub(n_max)..];
    let pad = n_max - keep.len();
    let mut ids = vec![PAD_ID; pad];
    ids.extend_from_slice(keep);
    let mut mask = vec![false; pad];
    mask.extend(std::iter::repeat_n(true, keep.len()));
    (ids, mask)
}

/// Corpus-derived lookup tables shared by training and evaluation.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub vocab: Vocab,
    /// Token ids of every news title, by corpus news index.
    pub titles: Vec<Vec<usize>>,
    /// User-ID rows for users seen in training, starting at 1.
    pub users: BTreeMap<String, usize>,
}

impl Prepared {
    pub fn new(corpus: &Corpus, train: &[usize], min_count: usize, l_max: usize) -> Self {
        let vocab = build_vocab(&corpus.news, min_count);
        let titles = corpus.news.iter().map(|n| vocab.encode(&n.tokens, l_max)).collect();
        let mut names: Vec<&str> = train.iter().map(|&i| corpus.impressions[i].user_id.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        let users = names.into_iter().enumerate().map(|(i, u)| (u.to_string(), i + 1)).collect();
        Prepared { vocab, titles, users }
    }

    pub fn user_row(&self, user_id: &str) -> usize {
        self.users.get(user_id).copied().unwrap_or(0)
    }

    pub fn model_config(&self, c: &TrainConfig) -> ModelConfig {
        ModelConfig {
            variant: c.variant,
            vocab_size: self.vocab.len(),
            n_users: self.users.len(),
            word_dim: c.word_dim,
            d_model: c.d_model,
            heads: c.heads,
            max_title: c.l_max,
            max_history: c.n_max,
            window: c.k,
            dropout: c.dropout,
        }
    }

    /// Resolves impressions to news indices. Histories are cut to the most
    /// recent `n_max` clicks, then reordered by `order`; shuffles are seeded
    /// per impression so every epoch and every model sees the same order.
    pub fn resolve(&self, corpus: &Corpus, idx: &[usize], n_max: usize, order: OrderMode, seed: u64) -> Vec<EvalImpression> {
        idx.iter()
            .map(|&i| {
                let imp = &corpus.impressions[i];
                let full: Vec<usize> = imp.history.iter().filter_map(|id| corpus.index_of(id)).collect();
                let (ids, mask) = pad_truncate_history(&full, n_max);
                let kept: Vec<usize> = ids.into_iter().zip(mask).filter(|(_, m)| *m).map(|(id, _)| id).collect();
                let history = apply_order_perturbation(&kept, order, derive_seed(&[seed, i as u64]));
                let (candidates, labels) = imp
                    .candidates
                    .iter()
                    .filter_map(|(id, l)| corpus.index_of(id).map(|c| (c, *l)))
                    .unzip();
                EvalImpression {
                    history,
                    user: self.user_row(&imp.user_id),
                    candidates,
                    labels,
                }
            })
            .collect()
    }
}

/// Fresh parameters for `config.seed` with `w` set to `config.w_init`, and
/// pretrained word vectors copied in when given.
pub fn initial_params(
    model: &Recommender,
    config: &TrainConfig,
    pretrained: Option<&[(usize, Vec<f32>)]>,
) -> Result<ModelParams<f32>> {
    let mut p = model.init_params::<f32>(config.seed);
    if let Some(w) = p.get_mut(W_NAME) {
        w.values_mut()[0] = config.w_init as f32;
    }
    if let Some(rows) = pretrained {
        load_pretrained(&mut p, rows.iter().cloned())?;
    }
    Ok(p)
}

/// Encodes each news item at most once per tape.
struct NewsCache<'a> {
    titles: &'a [Vec<usize>],
    vars: HashMap<usize, Var>,
}

impl<'a> NewsCache<'a> {
    fn new(titles: &'a [Vec<usize>]) -> Self {
        NewsCache {
            titles,
            vars: HashMap::new(),
        }
    }

    fn get<T: Real>(
        &mut self,
        model: &Recommender,
        tape: &mut Tape<T>,
        store: &ModelParams<T>,
        idx: usize,
        ctx: &mut ForwardCtx,
    ) -> Result<Var> {
        if let Some(&v) = self.vars.get(&idx) {
            return Ok(v);
        }
        let title = self.titles.get(idx).ok_or(Error::Index {
            index: idx,
            len: self.titles.len(),
        })?;
        let v = model.encode_news(tape, store, title, ctx)?;
        self.vars.insert(idx, v);
        Ok(v)
    }
}

/// Mean listwise loss of `samples` built on `tape`.
pub fn batch_loss<T: Real>(
    model: &Recommender,
    tape: &mut Tape<T>,
    store: &ModelParams<T>,
    titles: &[Vec<usize>],
    samples: &[&TrainSample],
    ctx: &mut ForwardCtx,
) -> Result<Var> {
    if samples.is_empty() {
        return Err(Error::EmptySequence("batch"));
    }
    let mut cache = NewsCache::new(titles);
    let mut losses = Vec::with_capacity(samples.len());
    for s in samples {
        let history = s
            .history
            .iter()
            .map(|&i| cache.get(model, tape, store, i, ctx))
            .collect::<Result<Vec<_>>>()?;
        let mut cands = vec![cache.get(model, tape, store, s.positive, ctx)?];
        for &n in &s.negatives {
            cands.push(cache.get(model, tape, store, n, ctx)?);
        }
        let c = tape.concat_rows(&cands)?;
        let scores = model.score(tape, store, &history, s.user, c, ctx)?;
        losses.push(tape.softmax_xent(scores, 0)?);
    }
    let all = tape.concat_cols(&losses)?;
    let total = tape.sum(all);
    Ok(tape.scale(total, T::lit(1.0 / samples.len() as f64)))
}

/// A trained model frozen for scoring, with every news vector precomputed.
pub struct FrozenModel<'a> {
    model: &'a Recommender,
    params: &'a ModelParams<f32>,
    news: Vec<Vec<f32>>,
}

impl<'a> FrozenModel<'a> {
    pub fn new(model: &'a Recommender, params: &'a ModelParams<f32>, titles: &[Vec<usize>], threads: usize) -> Result<Self> {
        let encode = |title: &Vec<usize>| -> Result<Vec<f32>> {
            let mut tape = Tape::new();
            let v = model.encode_news(&mut tape, params, title, &mut ForwardCtx::eval())?;
            Ok(tape.value(v).to_vec())
        };
        let news = if threads <= 1 {
            titles.iter().map(encode).collect::<Result<Vec<_>>>()?
        } else {
            use rayon::prelude::*;
            with_threads(threads, || titles.par_iter().map(encode).collect::<Result<Vec<_>>>())??
        };
        Ok(FrozenModel { model, params, news })
    }

    pub fn news_vector(&self, idx: usize) -> Option<&[f32]> {
        self.news.get(idx).map(Vec::as_slice)
    }

    fn rows(&self, tape: &mut Tape<f32>, ids: &[usize]) -> Result<Vec<Var>> {
        ids.iter()
            .map(|&i| {
                let v = self.news.get(i).ok_or(Error::Index {
                    index: i,
                    len: self.news.len(),
                })?;
                tape.constant(1, v.len(), v.clone())
            })
            .collect()
    }
}

impl ImpressionScorer for FrozenModel<'_> {
    fn score(&self, imp: &EvalImpression) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let history = self.rows(&mut tape, &imp.history)?;
        let cands = self.rows(&mut tape, &imp.candidates)?;
        let c = tape.concat_rows(&cands)?;
        let s = self
            .model
            .score(&mut tape, self.params, &history, imp.user, c, &mut ForwardCtx::eval())?;
        Ok(tape.value(s).iter().map(|x| x.as_f64()).collect())
    }
}

/// Per-epoch record of the training loop.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochTrace {
    pub epoch: usize,
    /// Mean training loss over the epoch's samples.
    pub loss: f64,
    pub samples: usize,
    pub valid: Option<MetricsReport>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Recommender,
    /// Parameters of the best-validation epoch, or of the last epoch when
    /// there is no validation data.
    pub params: ModelParams<f32>,
    pub trace: Vec<EpochTrace>,
    pub best_epoch: usize,
}

/// Trains from `init` with Adam. Samples are rebuilt and shuffled each
/// epoch from seeds derived from `(config.seed, epoch)`. After every epoch
/// the model is scored on `valid` (if non-empty) and the parameters with
/// the best validation AUC are kept.
pub fn train(
    config: &TrainConfig,
    model: &Recommender,
    titles: &[Vec<usize>],
    train_set: &[EvalImpression],
    valid: &[EvalImpression],
    init: ModelParams<f32>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    model.check_params(&init)?;
    let adam = AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    };
    let mut params = init;
    let mut states: BTreeMap<String, AdamState<f32>> = params
        .iter()
        .map(|(n, t)| (n.clone(), AdamState::new(t.len(), adam)))
        .collect();
    let frozen = model.frozen_rows();
    let mut trace = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ModelParams<f32>)> = None;

    for epoch in 0..config.epochs {
        let mut samples = Vec::new();
        for (i, imp) in train_set.iter().enumerate() {
            let seed = derive_seed(&[config.seed, epoch as u64, i as u64, 1]);
            samples.extend(build_training_samples(imp, config.neg, seed)?);
        }
        if samples.is_empty() {
            return Err(Error::Config("training split has no impression with both a click and a non-click".into()));
        }
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(&[config.seed, epoch as u64, 2])));

        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch).enumerate() {
            let batch: Vec<&TrainSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let mut tape = Tape::<f32>::new();
            let mut ctx = ForwardCtx::train(config.dropout, derive_seed(&[config.seed, epoch as u64, b as u64, 3]));
            let loss = batch_loss(model, &mut tape, &params, titles, &batch, &mut ctx)?;
            let value = tape.scalar_value(loss) as f64;
            if !value.is_finite() {
                return Err(Error::Contract(format!("non-finite loss at epoch {epoch}, batch {b}")));
            }
            loss_sum += value * batch.len() as f64;
            tape.backward(loss)?;
            let mut grads = tape.param_grads();
            for &(name, row) in &frozen {
                if let (Some(g), Some(t)) = (grads.get_mut(name), params.get(name)) {
                    let (_, cols) = t.as_matrix_dims();
                    g[row * cols..(row + 1) * cols].fill(0.0);
                }
            }
            for (name, g) in &grads {
                let t = params.get_mut(name).expect("gradient for a known parameter");
                let st = states.get_mut(name).expect("state for a known parameter");
                adam_step(t.values_mut(), g, st)?;
            }
        }

        let valid_report = if valid.is_empty() {
            None
        } else {
            let frozen = FrozenModel::new(model, &params, titles, config.threads)?;
            Some(evaluate(&frozen, valid, config.threads)?)
        };
        if let Some(r) = &valid_report {
            if best.as_ref().is_none_or(|(auc, _, _)| r.auc > *auc) {
                best = Some((r.auc, epoch, params.clone()));
            }
        }
        trace.push(EpochTrace {
            epoch,
            loss: loss_sum / samples.len() as f64,
            samples: samples.len(),
            valid: valid_report,
        });
    }

    let (best_epoch, params) = match best {
        Some((_, e, p)) => (e, p),
        None => (config.epochs - 1, params),
    };
    Ok(TrainOutcome {
        model: model.clone(),
        params,
        trace,
        best_epoch,
    })
}

#[cfg(test)]
mod tests;
