//! Full recommenders: the shared news encoder paired with one of the user
//! models compared in the experiments.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoders::{
    click_scores, ForwardCtx, GruUserEncoder, NewsEncoder, TransformerUserEncoder, UserVariant, PAD_ID,
    USER_ID_EMB, WORD_EMB,
};
use crate::error::{Error, Result};
use crate::numkernel::{ModelParams, Real, Tape, Var};
use crate::temprec::TempRecParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    NrmsPlain,
    NrmsPos,
    NrmsCausal,
    Lstur,
    TempRec,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::NrmsPlain,
        Variant::NrmsPos,
        Variant::NrmsCausal,
        Variant::Lstur,
        Variant::TempRec,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::NrmsPlain => "nrms_plain",
            Variant::NrmsPos => "nrms_pos",
            Variant::NrmsCausal => "nrms_causal",
            Variant::Lstur => "lstur",
            Variant::TempRec => "temprec",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

/// Architecture hyperparameters; everything needed to rebuild a model
/// around a checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub vocab_size: usize,
    /// Known users; only the GRU variant uses it.
    pub n_users: usize,
    pub word_dim: usize,
    pub d_model: usize,
    pub heads: usize,
    pub max_title: usize,
    pub max_history: usize,
    /// Recent-interest window `K` (TempRec only).
    pub window: usize,
    pub dropout: f64,
}

#[derive(Clone, Debug, PartialEq)]
enum UserHead {
    Transformer(TransformerUserEncoder),
    Gru(GruUserEncoder),
    TempRec(TempRecParams),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Recommender {
    pub config: ModelConfig,
    pub news: NewsEncoder,
    user: UserHead,
}

impl Recommender {
    pub fn new(config: ModelConfig) -> Result<Self> {
        if !(0.0..=1.0).contains(&config.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1]", config.dropout)));
        }
        let news = NewsEncoder::new(
            config.vocab_size,
            config.word_dim,
            config.d_model,
            config.heads,
            config.max_title,
        )?;
        let (d, h, n) = (config.d_model, config.heads, config.max_history);
        let user = match config.variant {
            Variant::NrmsPlain => UserHead::Transformer(TransformerUserEncoder::new(UserVariant::Plain, d, h, n)?),
            Variant::NrmsPos => UserHead::Transformer(TransformerUserEncoder::new(UserVariant::PosEmb, d, h, n)?),
            Variant::NrmsCausal => UserHead::Transformer(TransformerUserEncoder::new(UserVariant::Causal, d, h, n)?),
            Variant::Lstur => UserHead::Gru(GruUserEncoder::new(d, config.n_users)?),
            Variant::TempRec => UserHead::TempRec(TempRecParams::new(d, h, config.window)?),
        };
        Ok(Recommender { config, news, user })
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn temprec(&self) -> Option<&TempRecParams> {
        match &self.user {
            UserHead::TempRec(p) => Some(p),
            _ => None,
        }
    }

    pub fn init_params<T: Real>(&self, seed: u64) -> ModelParams<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ModelParams::new();
        self.news.init(&mut store, &mut rng);
        match &self.user {
            UserHead::Transformer(u) => u.init(&mut store, &mut rng),
            UserHead::Gru(u) => u.init(&mut store, &mut rng),
            UserHead::TempRec(u) => u.init(&mut store, &mut rng),
        }
        store
    }

    /// Checks that `store` holds exactly this model's parameters with the
    /// expected shapes.
    pub fn check_params<T: Real>(&self, store: &ModelParams<T>) -> Result<()> {
        let reference = self.init_params::<T>(0);
        for (name, t) in reference.iter() {
            match store.get(name) {
                None => return Err(Error::Checkpoint(format!("missing parameter {name}"))),
                Some(s) if s.shape() != t.shape() => {
                    return Err(Error::Checkpoint(format!(
                        "{name} has shape {:?}, model expects {:?}",
                        s.shape(),
                        t.shape()
                    )))
                }
                Some(_) => {}
            }
        }
        if let Some(extra) = store.names().find(|n| !reference.contains(n)) {
            return Err(Error::Checkpoint(format!("unexpected parameter {extra}")));
        }
        Ok(())
    }

    /// Rows that never change during training: the padding embedding and
    /// the unknown-user embedding.
    pub fn frozen_rows(&self) -> Vec<(&'static str, usize)> {
        let mut rows = vec![(WORD_EMB, PAD_ID)];
        if matches!(self.user, UserHead::Gru(_)) {
            rows.push((USER_ID_EMB, 0));
        }
        rows
    }

    pub fn encode_news<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ModelParams<T>,
        title_ids: &[usize],
        ctx: &mut ForwardCtx,
    ) -> Result<Var> {
        self.news.encode(tape, store, title_ids, ctx)
    }

    /// Click scores (`1 x M`) of the candidate rows for a user whose
    /// clicked-news vectors are `history` (oldest first, each `1 x d`).
    /// An empty history scores every candidate 0, except under the GRU
    /// variant where the user-ID half still contributes.
    pub fn score<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ModelParams<T>,
        history: &[Var],
        user_index: usize,
        candidates: Var,
        ctx: &mut ForwardCtx,
    ) -> Result<Var> {
        let r = if history.is_empty() {
            None
        } else if history.len() == 1 {
            Some(history[0])
        } else {
            Some(tape.concat_rows(history)?)
        };
        match (&self.user, r) {
            (UserHead::Gru(g), r) => {
                let u = g.encode(tape, store, r, user_index)?;
                click_scores(tape, u, candidates)
            }
            (_, None) => {
                let m = tape.shape(candidates).0;
                tape.constant(1, m, vec![T::zero(); m])
            }
            (UserHead::Transformer(t), Some(r)) => {
                let u = t.encode(tape, store, r, ctx)?;
                click_scores(tape, u, candidates)
            }
            (UserHead::TempRec(p), Some(r)) => Ok(p.forward(tape, store, r, candidates, ctx)?.y),
        }
    }
}
