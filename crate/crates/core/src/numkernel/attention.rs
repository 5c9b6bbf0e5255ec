//! Multi-head scaled dot-product self-attention.
//!
//! The per-head projections `W^Q_i`, `W^K_i`, `W^V_i` (each
//! `d_model x d_head`) are stored side by side as column blocks of one
//! `d_model x (h * d_head)` matrix per role; head `i` owns columns
//! `i * d_head .. (i + 1) * d_head`.

use rand::Rng;

use super::init::uniform_fan_in;
use super::params::ModelParams;
use super::tape::{Tape, Var};
use super::tensor::Real;
use crate::error::{Error, Result};

/// Value standing in for `-inf` on masked logits.
pub const MASK_FILL: f64 = -1e9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttnMask {
    None,
    /// Position `i` attends to positions `0..=i` only.
    Causal,
}

/// Handle to one attention block living in a [`ModelParams`] under
/// `prefix`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttentionParams {
    pub prefix: String,
    pub heads: usize,
    pub head_dim: usize,
}

impl AttentionParams {
    pub fn new(prefix: impl Into<String>, d_model: usize, heads: usize) -> Result<Self> {
        if heads == 0 || d_model == 0 || !d_model.is_multiple_of(heads) {
            return Err(Error::Config(format!(
                "d_model {d_model} is not divisible into {heads} heads"
            )));
        }
        Ok(AttentionParams {
            prefix: prefix.into(),
            heads,
            head_dim: d_model / heads,
        })
    }

    pub fn d_model(&self) -> usize {
        self.heads * self.head_dim
    }

    pub fn name(&self, role: &str) -> String {
        format!("{}.{role}", self.prefix)
    }

    pub fn init<T: Real, R: Rng>(&self, store: &mut ModelParams<T>, rng: &mut R) {
        let d = self.d_model();
        for role in ["wq", "wk", "wv"] {
            store.insert(self.name(role), uniform_fan_in(rng, vec![d, d], d));
        }
        store.insert(self.name("wo"), uniform_fan_in(rng, vec![d, d], d));
    }

    /// `Concat(head_1..head_h) W^O` with
    /// `head_i = softmax(X W^Q_i (X W^K_i)^T / sqrt(d_head)) X W^V_i`.
    ///
    /// `key_valid`, when given, marks real positions; logits towards
    /// invalid keys are filled with [`MASK_FILL`].
    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ModelParams<T>,
        x: Var,
        mask: AttnMask,
        key_valid: Option<&[bool]>,
    ) -> Result<Var> {
        let (n, cols) = tape.shape(x);
        if cols != self.d_model() {
            return Err(Error::Shape(format!(
                "attention input has {cols} columns, d_model is {}",
                self.d_model()
            )));
        }
        if let Some(kv) = key_valid {
            if kv.len() != n {
                return Err(Error::Shape(format!("key mask of {} for {n} rows", kv.len())));
            }
        }
        let wq = tape.param(store, &self.name("wq"))?;
        let wk = tape.param(store, &self.name("wk"))?;
        let wv = tape.param(store, &self.name("wv"))?;
        let wo = tape.param(store, &self.name("wo"))?;
        let q = tape.matmul(x, wq)?;
        let k = tape.matmul(x, wk)?;
        let v = tape.matmul(x, wv)?;

        let offsets = logit_offsets::<T>(n, mask, key_valid);
        let scale = T::lit(1.0 / (self.head_dim as f64).sqrt());
        let mut heads = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let start = h * self.head_dim;
            let qh = tape.slice_cols(q, start, self.head_dim)?;
            let kh = tape.slice_cols(k, start, self.head_dim)?;
            let vh = tape.slice_cols(v, start, self.head_dim)?;
            let kt = tape.transpose(kh);
            let logits = tape.matmul(qh, kt)?;
            let mut logits = tape.scale(logits, scale);
            if let Some(off) = &offsets {
                logits = tape.add_const(logits, off)?;
            }
            let weights = tape.softmax_rows(logits);
            heads.push(tape.matmul(weights, vh)?);
        }
        let concat = if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads)? };
        tape.matmul(concat, wo)
    }
}

fn logit_offsets<T: Real>(n: usize, mask: AttnMask, key_valid: Option<&[bool]>) -> Option<Vec<T>> {
    let needs = mask == AttnMask::Causal || key_valid.is_some_and(|kv| kv.iter().any(|v| !v));
    if !needs {
        return None;
    }
    let fill = T::lit(MASK_FILL);
    let mut off = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            let future = mask == AttnMask::Causal && j > i;
            let padded = key_valid.is_some_and(|kv| !kv[j]);
            if future || padded {
                off[i * n + j] = fill;
            }
        }
    }
    Some(off)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64, d: usize, h: usize) -> (AttentionParams, ModelParams<f64>) {
        let attn = AttentionParams::new("attn", d, h).unwrap();
        let mut store = ModelParams::new();
        attn.init(&mut store, &mut ChaCha8Rng::seed_from_u64(seed));
        (attn, store)
    }

    fn run(attn: &AttentionParams, store: &ModelParams<f64>, x: &[f64], n: usize, mask: AttnMask) -> Vec<f64> {
        let mut t = Tape::new();
        let xv = t.constant(n, attn.d_model(), x.to_vec()).unwrap();
        let y = attn.forward(&mut t, store, xv, mask, None).unwrap();
        t.value(y).to_vec()
    }

    #[test]
    fn indivisible_heads_rejected() {
        assert!(matches!(AttentionParams::new("a", 10, 3), Err(Error::Config(_))));
    }

    #[test]
    fn single_position_is_value_projection() {
        let (attn, store) = setup(3, 6, 2);
        let x: Vec<f64> = (0..6).map(|i| i as f64 * 0.1 - 0.2).collect();
        let out = run(&attn, &store, &x, 1, AttnMask::None);
        let wv = store.get("attn.wv").unwrap().values();
        let wo = store.get("attn.wo").unwrap().values();
        let xv = crate::numkernel::tape::matmul_plain(&x, wv, 1, 6, 6);
        let expected = crate::numkernel::tape::matmul_plain(&xv, wo, 1, 6, 6);
        for (a, b) in out.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn unmasked_is_permutation_equivariant() {
        let (attn, store) = setup(11, 8, 2);
        let n = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..n * 8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let perm = [3usize, 0, 4, 1, 2];
        let px: Vec<f64> = perm.iter().flat_map(|&p| x[p * 8..(p + 1) * 8].to_vec()).collect();
        let out = run(&attn, &store, &x, n, AttnMask::None);
        let pout = run(&attn, &store, &px, n, AttnMask::None);
        for (i, &p) in perm.iter().enumerate() {
            for c in 0..8 {
                let a = pout[i * 8 + c];
                let b = out[p * 8 + c];
                assert!((a - b).abs() <= 1e-5 * b.abs().max(1e-8), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn causal_row_zero_ignores_later_rows() {
        let (attn, store) = setup(2, 4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut y = x.clone();
        for v in &mut y[4..] {
            *v += 0.7;
        }
        let a = run(&attn, &store, &x, 3, AttnMask::Causal);
        let b = run(&attn, &store, &y, 3, AttnMask::Causal);
        assert_eq!(&a[..4], &b[..4]);
        assert_ne!(&a[4..], &b[4..]);
    }
}
