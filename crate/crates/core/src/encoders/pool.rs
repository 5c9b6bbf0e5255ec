use rand::Rng;

use crate::error::{Error, Result};
use crate::numkernel::init::uniform_fan_in;
use crate::numkernel::{ModelParams, Real, Tape, Var, MASK_FILL};

/// Additive attention pooling:
/// `alpha = softmax(q_a . tanh(W_a h_i + b_a))`, output `sum_i alpha_i h_i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdditivePool {
    pub prefix: String,
    pub dim: usize,
}

impl AdditivePool {
    pub fn new(prefix: impl Into<String>, dim: usize) -> Self {
        AdditivePool {
            prefix: prefix.into(),
            dim,
        }
    }

    fn name(&self, role: &str) -> String {
        format!("{}.{role}", self.prefix)
    }

    pub fn init<T: Real, R: Rng>(&self, store: &mut ModelParams<T>, rng: &mut R) {
        let d = self.dim;
        store.insert(self.name("wa"), uniform_fan_in(rng, vec![d, d], d));
        store.insert(self.name("ba"), uniform_fan_in(rng, vec![d], d));
        store.insert(self.name("qa"), uniform_fan_in(rng, vec![d, 1], d));
    }

    /// Pools the rows of `h` (L x d) into a `1 x d` vector. Rows marked
    /// invalid in `valid` get weight exactly zero.
    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ModelParams<T>,
        h: Var,
        valid: Option<&[bool]>,
    ) -> Result<Var> {
        let (rows, cols) = tape.shape(h);
        if cols != self.dim {
            return Err(Error::Shape(format!("pool input has {cols} columns, expected {}", self.dim)));
        }
        if let Some(v) = valid {
            if v.len() != rows {
                return Err(Error::Shape(format!("pool mask of {} for {rows} rows", v.len())));
            }
            if !v.iter().any(|&x| x) {
                return Err(Error::EmptySequence("additive_attention_pool"));
            }
        }
        let wa = tape.param(store, &self.name("wa"))?;
        let ba = tape.param(store, &self.name("ba"))?;
        let qa = tape.param(store, &self.name("qa"))?;
        let proj = tape.matmul(h, wa)?;
        let proj = tape.add_row(proj, ba)?;
        let act = tape.tanh(proj);
        let scores = tape.matmul(act, qa)?;
        let mut logits = tape.transpose(scores);
        if let Some(v) = valid.filter(|v| v.iter().any(|x| !x)) {
            let off: Vec<T> = v.iter().map(|&ok| if ok { T::zero() } else { T::lit(MASK_FILL) }).collect();
            logits = tape.add_const(logits, &off)?;
        }
        let alpha = tape.softmax_rows(logits);
        tape.matmul(alpha, h)
    }
}
