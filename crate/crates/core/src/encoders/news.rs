use rand::Rng;

use super::pool::AdditivePool;
use super::ForwardCtx;
use crate::error::{Error, Result};
use crate::numkernel::init::uniform_fan_in;
use crate::numkernel::{AttentionParams, AttnMask, ModelParams, Real, Tape, Tensor, Var};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;

pub const WORD_EMB: &str = "news.word_emb";
const PROJ_W: &str = "news.proj.w";
const PROJ_B: &str = "news.proj.b";

/// Title encoder: embedding lookup, projection to `d_model`, one unmasked
/// multi-head self-attention layer and additive pooling.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NewsEncoder {
    pub vocab_size: usize,
    pub word_dim: usize,
    pub max_title: usize,
    pub attn: AttentionParams,
    pub pool: AdditivePool,
}

impl NewsEncoder {
    pub fn new(vocab_size: usize, word_dim: usize, d_model: usize, heads: usize, max_title: usize) -> Result<Self> {
        if vocab_size < 2 {
            return Err(Error::Config("vocabulary needs padding and UNK entries".into()));
        }
        Ok(NewsEncoder {
            vocab_size,
            word_dim,
            max_title,
            attn: AttentionParams::new("news.attn", d_model, heads)?,
            pool: AdditivePool::new("news.pool", d_model),
        })
    }

    pub fn d_model(&self) -> usize {
        self.attn.d_model()
    }

    pub fn init<T: Real, R: Rng>(&self, store: &mut ModelParams<T>, rng: &mut R) {
        let mut emb = uniform_fan_in::<T, _>(rng, vec![self.vocab_size, self.word_dim], self.word_dim);
        emb.values_mut()[..self.word_dim].fill(T::zero());
        store.insert(WORD_EMB, emb);
        store.insert(PROJ_W, uniform_fan_in(rng, vec![self.word_dim, self.d_model()], self.word_dim));
        store.insert(PROJ_B, uniform_fan_in(rng, vec![self.d_model()], self.word_dim));
        self.attn.init(store, rng);
        self.pool.init(store, rng);
    }

    /// Encodes one title into a `1 x d_model` vector. Padding ids are
    /// masked out of attention and pooling; a title with no real token
    /// encodes to the zero vector.
    pub fn encode<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ModelParams<T>,
        title_ids: &[usize],
        ctx: &mut ForwardCtx,
    ) -> Result<Var> {
        if title_ids.len() > self.max_title {
            return Err(Error::Contract(format!(
                "title of {} tokens exceeds the {} limit",
                title_ids.len(),
                self.max_title
            )));
        }
        let valid: Vec<bool> = title_ids.iter().map(|&id| id != PAD_ID).collect();
        if !valid.iter().any(|&v| v) {
            return tape.constant(1, self.d_model(), vec![T::zero(); self.d_model()]);
        }
        let table = tape.param(store, WORD_EMB)?;
        let emb = embed_lookup(tape, table, title_ids)?;
        let emb = ctx.dropout(tape, emb)?;
        let w = tape.param(store, PROJ_W)?;
        let b = tape.param(store, PROJ_B)?;
        let x = tape.matmul(emb, w)?;
        let x = tape.add_row(x, b)?;
        let h = self.attn.forward(tape, store, x, AttnMask::None, Some(&valid))?;
        let h = ctx.dropout(tape, h)?;
        self.pool.forward(tape, store, h, Some(&valid))
    }
}

/// Rows of the embedding table for `ids`; the padding row is all zero.
pub fn embed_lookup<T: Real>(tape: &mut Tape<T>, table: Var, ids: &[usize]) -> Result<Var> {
    tape.gather_rows(table, ids)
}

/// Fills embedding rows from pretrained vectors, leaving the padding row at
/// zero. `vectors` yields `(vocab index, vector)`.
pub fn load_pretrained<T: Real>(
    store: &mut ModelParams<T>,
    vectors: impl IntoIterator<Item = (usize, Vec<f32>)>,
) -> Result<usize> {
    let table: &mut Tensor<T> = store
        .get_mut(WORD_EMB)
        .ok_or_else(|| Error::Config("model has no word embedding table".into()))?;
    let (rows, dim) = table.as_matrix_dims();
    let mut loaded = 0;
    for (idx, vec) in vectors {
        if idx == PAD_ID {
            continue;
        }
        if idx >= rows {
            return Err(Error::Index { index: idx, len: rows });
        }
        if vec.len() != dim {
            return Err(Error::Shape(format!("pretrained vector of {} for word dim {dim}", vec.len())));
        }
        for (dst, &src) in table.values_mut()[idx * dim..(idx + 1) * dim].iter_mut().zip(&vec) {
            *dst = T::lit(src as f64);
        }
        loaded += 1;
    }
    Ok(loaded)
}
