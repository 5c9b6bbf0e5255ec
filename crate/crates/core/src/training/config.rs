use std::str::FromStr;

use crate::encoders::OrderMode;
use crate::error::{Error, Result};
use crate::model::Variant;

/// Hyperparameters of one training run. `epochs` has no default and must
/// be set before [`TrainConfig::validate`] passes.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    pub d_model: usize,
    pub heads: usize,
    pub word_dim: usize,
    pub lr: f64,
    /// Negatives per positive (`S`).
    pub neg: usize,
    /// Recent-interest window (`K`).
    pub k: usize,
    pub n_max: usize,
    pub l_max: usize,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    pub dropout: f64,
    pub min_count: usize,
    pub order: OrderMode,
    pub threads: usize,
    /// Starting value of the TempRec diversity weight `w`.
    pub w_init: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::TempRec,
            d_model: 400,
            heads: 20,
            word_dim: 300,
            lr: 1e-4,
            neg: 4,
            k: 3,
            n_max: 50,
            l_max: 30,
            batch: 64,
            epochs: 0,
            seed: 42,
            dropout: 0.2,
            min_count: 2,
            order: OrderMode::Identity,
            threads: 1,
            w_init: W_INIT,
        }
    }
}

/// Default start for `w`. At exactly 0 the first Adam step moves `w` by
/// `lr` in the direction of one noisy batch gradient, and once negative the
/// clamp cuts off all gradient to it and to the recent tower, so about half
/// of all runs lose the penalty branch for good. A small positive start
/// keeps the branch trainable; the data can still drive `w` below zero.
pub const W_INIT: f64 = 0.1;

/// Keys accepted by [`TrainConfig::set`], in report order.
pub const CONFIG_KEYS: [&str; 17] = [
    "variant", "d_model", "heads", "word_dim", "lr", "neg", "k", "n_max", "l_max", "batch", "epochs", "seed",
    "dropout", "min_count", "order", "threads", "w_init",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

impl TrainConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "variant" => self.variant = v.parse()?,
            "d_model" => self.d_model = parse(key, v)?,
            "heads" => self.heads = parse(key, v)?,
            "word_dim" => self.word_dim = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "neg" => self.neg = parse(key, v)?,
            "k" => self.k = parse(key, v)?,
            "n_max" => self.n_max = parse(key, v)?,
            "l_max" => self.l_max = parse(key, v)?,
            "batch" => self.batch = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "dropout" => self.dropout = parse(key, v)?,
            "min_count" => self.min_count = parse(key, v)?,
            "order" => self.order = v.parse()?,
            "threads" => self.threads = parse(key, v)?,
            "w_init" => self.w_init = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "variant" => self.variant.to_string(),
            "d_model" => self.d_model.to_string(),
            "heads" => self.heads.to_string(),
            "word_dim" => self.word_dim.to_string(),
            "lr" => self.lr.to_string(),
            "neg" => self.neg.to_string(),
            "k" => self.k.to_string(),
            "n_max" => self.n_max.to_string(),
            "l_max" => self.l_max.to_string(),
            "batch" => self.batch.to_string(),
            "epochs" => self.epochs.to_string(),
            "seed" => self.seed.to_string(),
            "dropout" => self.dropout.to_string(),
            "min_count" => self.min_count.to_string(),
            "order" => self.order.to_string(),
            "threads" => self.threads.to_string(),
            "w_init" => self.w_init.to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are
    /// ignored; unknown keys are rejected with their line number.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(i + 1, format!("expected `key = value`, got {line:?}")))?;
            self.set(k.trim(), v).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        }
        Ok(())
    }

    /// `key = value` lines in [`CONFIG_KEYS`] order; parses back with
    /// [`TrainConfig::apply_text`].
    pub fn to_text(&self) -> String {
        CONFIG_KEYS
            .iter()
            .map(|k| format!("{k} = {}\n", self.get(k).unwrap_or_default()))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_model", self.d_model),
            ("heads", self.heads),
            ("word_dim", self.word_dim),
            ("neg", self.neg),
            ("k", self.k),
            ("n_max", self.n_max),
            ("l_max", self.l_max),
            ("batch", self.batch),
            ("epochs", self.epochs),
            ("min_count", self.min_count),
            ("threads", self.threads),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if self.variant == Variant::Lstur && !self.d_model.is_multiple_of(2) {
            return Err(Error::Config("lstur needs an even d_model".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !self.w_init.is_finite() {
            return Err(Error::Config(format!("w_init must be finite, got {}", self.w_init)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.d_model, c.lr, c.neg, c.k, c.n_max, c.l_max, c.batch), (400, 1e-4, 4, 3, 50, 30, 64));
        assert_eq!(c.dropout, 0.2);
        // epochs must be chosen explicitly
        assert!(c.validate().is_err());
        TrainConfig { epochs: 3, ..c }.validate().unwrap();
    }

    #[test]
    fn text_round_trip() {
        let mut c = TrainConfig::default();
        c.apply_text("# small run\nepochs = 5\nvariant = lstur\n\nlr=0.001  # faster\norder = random\n")
            .unwrap();
        assert_eq!((c.epochs, c.variant, c.lr, c.order), (5, Variant::Lstur, 0.001, OrderMode::Shuffle));
        let mut back = TrainConfig::default();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_key_names_line() {
        let mut c = TrainConfig::default();
        let e = c.apply_text("epochs = 2\nlearning_rate = 3\n").unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("learning_rate"), "{e}");
        assert!(c.apply_text("epochs: 2").is_err());
        assert!(c.apply_text("heads = many").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let base = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        for (k, v) in [("heads", "7"), ("dropout", "1.0"), ("lr", "0"), ("neg", "0"), ("k", "0")] {
            let mut c = base.clone();
            c.set(k, v).unwrap();
            assert!(c.validate().is_err(), "{k}={v}");
        }
    }
}
