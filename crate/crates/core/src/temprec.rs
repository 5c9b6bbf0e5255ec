//! Dual-interest scoring head: one shared order-agnostic transformer runs
//! over the full history and, separately, over the latest `K` clicks;
//! separate poolers give the global and recent interest vectors, and the
//! click score is `y = y_g - max(w, 0) * y_r`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoders::{click_scores, AdditivePool, ForwardCtx};
use crate::error::{Error, Result};
use crate::numkernel::{AttentionParams, AttnMask, ModelParams, Real, Tape, Tensor, Var};

pub const W_NAME: &str = "temprec.w";

/// Structure of the head. Both towers resolve to the same `temprec.attn.*`
/// tensors, so there is no second copy to drift.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TempRecParams {
    pub attn: AttentionParams,
    pub global_pool: AdditivePool,
    pub recent_pool: AdditivePool,
    pub window: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct TempRecOutput {
    /// `H`, the global tower's hidden rows.
    pub hidden: Var,
    /// `H'`, the recent tower's hidden rows.
    pub hidden_recent: Var,
    pub u_global: Var,
    pub u_recent: Var,
    pub y_global: Var,
    pub y_recent: Var,
    pub y: Var,
}

pub fn effective_diversity_weight(w: f64) -> f64 {
    w.max(0.0)
}

impl TempRecParams {
    pub fn new(d_model: usize, heads: usize, window: usize) -> Result<Self> {
        if window < 1 {
            return Err(Error::Config("window K must be at least 1".into()));
        }
        Ok(TempRecParams {
            attn: AttentionParams::new("temprec.attn", d_model, heads)?,
            global_pool: AdditivePool::new("temprec.global_pool", d_model),
            recent_pool: AdditivePool::new("temprec.recent_pool", d_model),
            window,
        })
    }

    /// Shared attention built once, poolers drawn independently, `w = 0`.
    pub fn init<T: Real, R: Rng>(&self, store: &mut ModelParams<T>, rng: &mut R) {
        self.attn.init(store, rng);
        self.global_pool.init(store, rng);
        self.recent_pool.init(store, rng);
        store.insert(W_NAME, Tensor::scalar(T::zero()));
    }

    /// Hidden rows of the shared transformer for `r`.
    pub fn tower<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ModelParams<T>,
        r: Var,
        ctx: &mut ForwardCtx,
    ) -> Result<Var> {
        let h = self.attn.forward(tape, store, r, AttnMask::None, None)?;
        ctx.dropout(tape, h)
    }

    /// Scores the rows of `candidates` (M x d) against history `r` (N x d).
    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ModelParams<T>,
        r: Var,
        candidates: Var,
        ctx: &mut ForwardCtx,
    ) -> Result<TempRecOutput> {
        let (n, _) = tape.shape(r);
        if n == 0 {
            return Err(Error::EmptySequence("temprec history"));
        }
        let hidden = self.tower(tape, store, r, ctx)?;
        let k = self.window.min(n);
        let recent = tape.slice_rows(r, n - k, k)?;
        let hidden_recent = self.tower(tape, store, recent, ctx)?;
        let u_global = self.global_pool.forward(tape, store, hidden, None)?;
        let u_recent = self.recent_pool.forward(tape, store, hidden_recent, None)?;
        let y_global = click_scores(tape, u_global, candidates)?;
        let y_recent = click_scores(tape, u_recent, candidates)?;
        let w = tape.param(store, W_NAME)?;
        let weight = tape.pos_part(w);
        let penalty = tape.mul(weight, y_recent)?;
        let penalty = tape.neg(penalty);
        let y = tape.add(y_global, penalty)?;
        Ok(TempRecOutput {
            hidden,
            hidden_recent,
            u_global,
            u_recent,
            y_global,
            y_recent,
            y,
        })
    }
}

/// Fresh head plus its parameters.
pub fn init_temprec<T: Real>(seed: u64, d_model: usize, heads: usize, window: usize) -> Result<(TempRecParams, ModelParams<T>)> {
    let p = TempRecParams::new(d_model, heads, window)?;
    let mut store = ModelParams::new();
    p.init(&mut store, &mut ChaCha8Rng::seed_from_u64(seed));
    Ok((p, store))
}
