//! News encoder, user encoders and history order perturbations.

pub mod news;
pub mod perturb;
pub mod pool;
pub mod user;

pub use news::{embed_lookup, load_pretrained, NewsEncoder, PAD_ID, UNK_ID, WORD_EMB};
pub use perturb::{apply_order_perturbation, OrderMode};
pub use pool::AdditivePool;
pub use user::{click_scores, GruUserEncoder, TransformerUserEncoder, UserVariant, POS_EMB, USER_ID_EMB};

use crate::error::Result;
use crate::numkernel::{Real, Tape, Var};

/// Train/eval switch threaded through a forward pass. In train mode every
/// dropout site draws a fresh mask seed from `(seed, counter)`.
#[derive(Clone, Debug)]
pub struct ForwardCtx {
    train: bool,
    rate: f64,
    seed: u64,
    counter: u64,
}

impl ForwardCtx {
    pub fn eval() -> Self {
        ForwardCtx {
            train: false,
            rate: 0.0,
            seed: 0,
            counter: 0,
        }
    }

    pub fn train(rate: f64, seed: u64) -> Self {
        ForwardCtx {
            train: true,
            rate,
            seed,
            counter: 0,
        }
    }

    pub fn is_train(&self) -> bool {
        self.train
    }

    pub fn dropout<T: Real>(&mut self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        if !self.train {
            return tape.dropout(x, self.rate, false, 0);
        }
        self.counter += 1;
        let seed = splitmix64(self.seed ^ splitmix64(self.counter));
        tape.dropout(x, self.rate, true, seed)
    }
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests;
