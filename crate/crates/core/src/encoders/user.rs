use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::pool::AdditivePool;
use super::ForwardCtx;
use crate::error::{Error, Result};
use crate::numkernel::init::uniform_fan_in;
use crate::numkernel::{AttentionParams, AttnMask, ModelParams, Real, Tape, Tensor, Var};

pub const POS_EMB: &str = "user.pos_emb";
pub const USER_ID_EMB: &str = "user.id_emb";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UserVariant {
    /// Self-attention without positions or mask.
    Plain,
    /// Learnable position embeddings added before attention.
    PosEmb,
    /// Causal self-attention mask.
    Causal,
    /// GRU short-term state concatenated with a user-ID embedding.
    Gru,
}

impl UserVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            UserVariant::Plain => "plain",
            UserVariant::PosEmb => "pos_emb",
            UserVariant::Causal => "causal",
            UserVariant::Gru => "gru",
        }
    }
}

impl fmt::Display for UserVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UserVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(UserVariant::Plain),
            "pos_emb" => Ok(UserVariant::PosEmb),
            "causal" => Ok(UserVariant::Causal),
            "gru" => Ok(UserVariant::Gru),
            other => Err(Error::Config(format!("unknown user encoder {other:?}"))),
        }
    }
}

/// Self-attention user encoder in one of the three transformer variants.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransformerUserEncoder {
    pub variant: UserVariant,
    pub attn: AttentionParams,
    pub pool: AdditivePool,
    pub max_history: usize,
}

impl TransformerUserEncoder {
    pub fn new(variant: UserVariant, d_model: usize, heads: usize, max_history: usize) -> Result<Self> {
        if variant == UserVariant::Gru {
            return Err(Error::Config("gru is not a transformer variant".into()));
        }
        Ok(TransformerUserEncoder {
            variant,
            attn: AttentionParams::new("user.attn", d_model, heads)?,
            pool: AdditivePool::new("user.pool", d_model),
            max_history,
        })
    }

    pub fn init<T: Real, R: Rng>(&self, store: &mut ModelParams<T>, rng: &mut R) {
        self.attn.init(store, rng);
        self.pool.init(store, rng);
        if self.variant == UserVariant::PosEmb {
            let d = self.attn.d_model();
            store.insert(POS_EMB, uniform_fan_in(rng, vec![self.max_history, d], d));
        }
    }

    /// `r` is the `N x d_model` clicked-news matrix, oldest first.
    pub fn encode<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ModelParams<T>,
        r: Var,
        ctx: &mut ForwardCtx,
    ) -> Result<Var> {
        let (n, _) = tape.shape(r);
        let mut x = r;
        let mut mask = AttnMask::None;
        match self.variant {
            UserVariant::Plain => {}
            UserVariant::Causal => mask = AttnMask::Causal,
            UserVariant::PosEmb => {
                if n > self.max_history {
                    return Err(Error::Contract(format!(
                        "history of {n} exceeds the position table ({})",
                        self.max_history
                    )));
                }
                // The most recent click always sits at the last position.
                let table = tape.param(store, POS_EMB)?;
                let pos = tape.slice_rows(table, self.max_history - n, n)?;
                x = tape.add(x, pos)?;
            }
            UserVariant::Gru => unreachable!("rejected in new"),
        }
        let h = self.attn.forward(tape, store, x, mask, None)?;
        let h = ctx.dropout(tape, h)?;
        self.pool.forward(tape, store, h, None)
    }
}

/// GRU over the clicked-news sequence plus a user-ID embedding. The output
/// is `[h_N, e_user]`, each half `d_model / 2` wide.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GruUserEncoder {
    pub d_model: usize,
    pub hidden: usize,
    /// Rows of the ID table; row 0 is the zero vector for unknown users.
    pub id_rows: usize,
}

const GATES: [&str; 3] = ["z", "r", "n"];

impl GruUserEncoder {
    pub fn new(d_model: usize, n_users: usize) -> Result<Self> {
        if !d_model.is_multiple_of(2) {
            return Err(Error::Config(format!("d_model {d_model} must be even for the GRU encoder")));
        }
        Ok(GruUserEncoder {
            d_model,
            hidden: d_model / 2,
            id_rows: n_users + 1,
        })
    }

    pub fn init<T: Real, R: Rng>(&self, store: &mut ModelParams<T>, rng: &mut R) {
        let (d, hd) = (self.d_model, self.hidden);
        for g in GATES {
            store.insert(format!("user.gru.w{g}"), uniform_fan_in(rng, vec![d, hd], d));
            store.insert(format!("user.gru.u{g}"), uniform_fan_in(rng, vec![hd, hd], hd));
            store.insert(format!("user.gru.b{g}"), uniform_fan_in(rng, vec![hd], hd));
        }
        let mut ids: Tensor<T> = uniform_fan_in(rng, vec![self.id_rows, hd], hd);
        ids.values_mut()[..hd].fill(T::zero());
        store.insert(USER_ID_EMB, ids);
    }

    /// `r` is `None` for an empty history, which leaves the short-term half
    /// at zero.
    pub fn encode<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ModelParams<T>,
        r: Option<Var>,
        user_index: usize,
    ) -> Result<Var> {
        if user_index >= self.id_rows {
            return Err(Error::Index {
                index: user_index,
                len: self.id_rows,
            });
        }
        let hd = self.hidden;
        let mut h = tape.constant(1, hd, vec![T::zero(); hd])?;
        if let Some(r) = r {
            let (n, _) = tape.shape(r);
            let mut inputs = Vec::with_capacity(3);
            let mut recurrent = Vec::with_capacity(3);
            for g in GATES {
                let w = tape.param(store, &format!("user.gru.w{g}"))?;
                let b = tape.param(store, &format!("user.gru.b{g}"))?;
                let xw = tape.matmul(r, w)?;
                inputs.push(tape.add_row(xw, b)?);
                recurrent.push(tape.param(store, &format!("user.gru.u{g}"))?);
            }
            for t in 0..n {
                let xz = tape.slice_rows(inputs[0], t, 1)?;
                let xr = tape.slice_rows(inputs[1], t, 1)?;
                let xn = tape.slice_rows(inputs[2], t, 1)?;
                let hz = tape.matmul(h, recurrent[0])?;
                let z = tape.add(xz, hz)?;
                let z = tape.sigmoid(z);
                let hr = tape.matmul(h, recurrent[1])?;
                let rg = tape.add(xr, hr)?;
                let rg = tape.sigmoid(rg);
                let rh = tape.mul(rg, h)?;
                let hn = tape.matmul(rh, recurrent[2])?;
                let cand = tape.add(xn, hn)?;
                let cand = tape.tanh(cand);
                // h' = (1 - z) * cand + z * h = cand + z * (h - cand)
                let neg = tape.neg(cand);
                let diff = tape.add(h, neg)?;
                let gated = tape.mul(z, diff)?;
                h = tape.add(cand, gated)?;
            }
        }
        let table = tape.param(store, USER_ID_EMB)?;
        let id = tape.gather_rows(table, &[user_index])?;
        tape.concat_cols(&[h, id])
    }
}

/// Click score `u . r_c` for every row of `candidates` (M x d), as `1 x M`.
pub fn click_scores<T: Real>(tape: &mut Tape<T>, u: Var, candidates: Var) -> Result<Var> {
    let ct = tape.transpose(candidates);
    tape.matmul(u, ct)
}
