use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;

/// How a click history is reordered before it reaches the user encoder.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum OrderMode {
    #[default]
    Identity,
    Inverse,
    Shuffle,
}

impl OrderMode {
    pub const ALL: [OrderMode; 3] = [OrderMode::Identity, OrderMode::Inverse, OrderMode::Shuffle];

    pub fn as_str(self) -> &'static str {
        match self {
            OrderMode::Identity => "identity",
            OrderMode::Inverse => "inverse",
            OrderMode::Shuffle => "shuffle",
        }
    }
}

impl fmt::Display for OrderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OrderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "identity" => Ok(OrderMode::Identity),
            "inverse" => Ok(OrderMode::Inverse),
            "shuffle" | "random" => Ok(OrderMode::Shuffle),
            other => Err(Error::Config(format!("unknown order mode {other:?}"))),
        }
    }
}

/// Reorders `history`. `Shuffle` is a Fisher-Yates permutation driven
/// only by `seed`.
pub fn apply_order_perturbation<T: Clone>(history: &[T], mode: OrderMode, seed: u64) -> Vec<T> {
    let mut out = history.to_vec();
    match mode {
        OrderMode::Identity => {}
        OrderMode::Inverse => out.reverse(),
        OrderMode::Shuffle => out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed)),
    }
    out
}
