//! Finite-difference checks of every tape operation and of the full
//! training loss of each model variant, in double precision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoders::{AdditivePool, ForwardCtx};
use crate::error::Result;
use crate::eval::EvalImpression;
use crate::model::{ModelConfig, Recommender, Variant};
use crate::numkernel::{grad_check, params_fn, AttentionParams, AttnMask, ModelParams, Tape, Var};
use crate::temprec::W_NAME;
use crate::training::{batch_loss, build_training_samples, TrainSample};

/// Central-difference step. Smaller steps drown gradients near 1e-9 in
/// roundoff; at this one truncation error is still far below tolerance.
pub const DEFAULT_STEP: f64 = 1e-4;

/// Worst relative error of one check over all its points.
#[derive(Clone, Debug, PartialEq)]
pub struct GradRow {
    pub name: String,
    pub points: usize,
    pub coordinates: usize,
    pub max_rel_error: f64,
}

/// Values in `[-1, -0.1] U [0.1, 1]`, away from the kinks of relu-like ops.
fn away_from_zero<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let m = rng.gen_range(0.1..1.0);
            if rng.gen::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect()
}

type OpFn = fn(&mut Tape<f64>, &[Var]) -> Result<Var>;

/// Each op reads its inputs from one flat point; `shapes` says how to cut
/// it into leaves. The scalar checked is `sum(op(x) * weights)` with fixed
/// random weights, so every output coordinate contributes.
struct OpCase {
    name: &'static str,
    shapes: &'static [(usize, usize)],
    op: OpFn,
}

const OP_CASES: &[OpCase] = &[
    OpCase { name: "matmul", shapes: &[(3, 4), (4, 2)], op: |t, x| t.matmul(x[0], x[1]) },
    OpCase { name: "transpose", shapes: &[(3, 2)], op: |t, x| Ok(t.transpose(x[0])) },
    OpCase { name: "add", shapes: &[(2, 3), (2, 3)], op: |t, x| t.add(x[0], x[1]) },
    OpCase { name: "add_broadcast", shapes: &[(1, 1), (2, 3)], op: |t, x| t.add(x[0], x[1]) },
    OpCase { name: "mul", shapes: &[(2, 3), (2, 3)], op: |t, x| t.mul(x[0], x[1]) },
    OpCase { name: "mul_broadcast", shapes: &[(1, 1), (1, 4)], op: |t, x| t.mul(x[0], x[1]) },
    OpCase { name: "affine", shapes: &[(2, 2)], op: |t, x| Ok(t.affine(x[0], -1.5, 0.25)) },
    OpCase { name: "tanh", shapes: &[(2, 3)], op: |t, x| Ok(t.tanh(x[0])) },
    OpCase { name: "sigmoid", shapes: &[(2, 3)], op: |t, x| Ok(t.sigmoid(x[0])) },
    OpCase { name: "relu", shapes: &[(2, 3)], op: |t, x| Ok(t.relu(x[0])) },
    OpCase { name: "pos_part", shapes: &[(1, 1)], op: |t, x| Ok(t.pos_part(x[0])) },
    OpCase { name: "add_row", shapes: &[(3, 2), (1, 2)], op: |t, x| t.add_row(x[0], x[1]) },
    OpCase { name: "add_const", shapes: &[(2, 2)], op: |t, x| t.add_const(x[0], &[0.5, -3.0, 0.0, 2.0]) },
    OpCase { name: "softmax_rows", shapes: &[(2, 4)], op: |t, x| Ok(t.softmax_rows(x[0])) },
    OpCase { name: "dropout", shapes: &[(3, 3)], op: |t, x| t.dropout(x[0], 0.3, true, 17) },
    OpCase { name: "gather_rows", shapes: &[(4, 2)], op: |t, x| t.gather_rows(x[0], &[2, 0, 2]) },
    OpCase { name: "slice_rows", shapes: &[(4, 2)], op: |t, x| t.slice_rows(x[0], 1, 2) },
    OpCase { name: "slice_cols", shapes: &[(2, 4)], op: |t, x| t.slice_cols(x[0], 1, 3) },
    OpCase { name: "concat_rows", shapes: &[(1, 3), (2, 3)], op: |t, x| t.concat_rows(&[x[0], x[1]]) },
    OpCase { name: "concat_cols", shapes: &[(2, 1), (2, 3)], op: |t, x| t.concat_cols(&[x[0], x[1]]) },
    OpCase { name: "sum", shapes: &[(2, 3)], op: |t, x| Ok(t.sum(x[0])) },
    OpCase { name: "softmax_xent", shapes: &[(1, 5)], op: |t, x| t.softmax_xent(x[0], 2) },
];

fn check_op(case: &OpCase, seed: u64, points: usize, h: f64) -> Result<GradRow> {
    let n: usize = case.shapes.iter().map(|(r, c)| r * c).sum();
    let mut worst = 0.0f64;
    for p in 0..points as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (p << 32));
        let point = away_from_zero(&mut rng, n);
        let mut weights: Option<Vec<f64>> = None;
        let wseed = rng.gen::<u64>();
        let f = |flat: &[f64]| -> Result<(f64, Vec<f64>)> {
            let mut t = Tape::<f64>::new();
            let mut leaves = Vec::new();
            let mut off = 0;
            for &(r, c) in case.shapes {
                leaves.push(t.leaf(r, c, flat[off..off + r * c].to_vec(), true)?);
                off += r * c;
            }
            let out = (case.op)(&mut t, &leaves)?;
            let (r, c) = t.shape(out);
            let w = weights
                .get_or_insert_with(|| away_from_zero(&mut ChaCha8Rng::seed_from_u64(wseed), r * c))
                .clone();
            let wv = t.constant(r, c, w)?;
            let prod = t.mul(out, wv)?;
            let s = t.sum(prod);
            t.backward(s)?;
            let mut g = Vec::with_capacity(flat.len());
            for &l in &leaves {
                g.extend_from_slice(t.grad(l).expect("leaf gradient"));
            }
            Ok((t.scalar_value(s), g))
        };
        worst = worst.max(grad_check(f, &point, h)?.max_rel_error);
    }
    Ok(GradRow {
        name: case.name.to_string(),
        points,
        coordinates: n,
        max_rel_error: worst,
    })
}

/// Module-level checks: attention under each mask and additive pooling.
fn check_module(name: &str, seed: u64, points: usize, h: f64) -> Result<GradRow> {
    let d = 4;
    let attn = AttentionParams::new("m.attn", d, 2)?;
    let pool = AdditivePool::new("m.pool", d);
    let mut worst = 0.0f64;
    let mut coords = 0;
    for p in 0..points as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (p << 32) ^ 0xA5);
        let mut store = ModelParams::<f64>::new();
        attn.init(&mut store, &mut rng);
        pool.init(&mut store, &mut rng);
        let x: Vec<f64> = away_from_zero(&mut rng, 3 * d);
        let name = name.to_string();
        let attn = attn.clone();
        let pool = pool.clone();
        let f = params_fn(&store, move |t, s| {
            let xv = t.constant(3, d, x.clone())?;
            let valid = [true, false, true];
            let hdn = match name.as_str() {
                "attention" => attn.forward(t, s, xv, AttnMask::None, None)?,
                "attention_causal" => attn.forward(t, s, xv, AttnMask::Causal, None)?,
                "attention_key_mask" => attn.forward(t, s, xv, AttnMask::None, Some(&valid))?,
                _ => xv,
            };
            let u = pool.forward(t, s, hdn, None)?;
            let sq = t.mul(u, u)?;
            Ok(t.sum(sq))
        });
        let point = store.flatten();
        coords = point.len();
        worst = worst.max(grad_check(f, &point, h)?.max_rel_error);
    }
    Ok(GradRow {
        name: name.to_string(),
        points,
        coordinates: coords,
        max_rel_error: worst,
    })
}

/// Runs every operation and module check.
pub fn op_suite(seed: u64, points: usize, h: f64) -> Result<Vec<GradRow>> {
    let mut rows = OP_CASES
        .iter()
        .map(|c| check_op(c, seed, points, h))
        .collect::<Result<Vec<_>>>()?;
    for m in ["attention", "attention_causal", "attention_key_mask", "additive_pool"] {
        rows.push(check_module(m, seed, points, h)?);
    }
    Ok(rows)
}

/// Smallest model configuration that still exercises every code path.
pub fn tiny_model(variant: Variant) -> Result<Recommender> {
    Recommender::new(ModelConfig {
        variant,
        vocab_size: 12,
        n_users: 3,
        word_dim: 4,
        d_model: 4,
        heads: 2,
        max_title: 5,
        max_history: 6,
        window: 2,
        dropout: 0.2,
    })
}

fn tiny_batch<R: Rng>(rng: &mut R) -> Result<(Vec<Vec<usize>>, Vec<TrainSample>)> {
    let titles: Vec<Vec<usize>> = (0..9)
        .map(|_| (0..rng.gen_range(2..=5)).map(|_| rng.gen_range(1..12)).collect())
        .collect();
    let mut samples = Vec::new();
    for (user, len) in [(1usize, 4usize), (0, 1), (3, 6)] {
        let imp = EvalImpression {
            history: (0..len).map(|_| rng.gen_range(0..9)).collect(),
            user,
            candidates: vec![0, 3, 5, 6, 8],
            labels: vec![0, 1, 0, 0, 0],
        };
        samples.extend(build_training_samples(&imp, 4, rng.gen())?);
    }
    Ok((titles, samples))
}

/// Checks the gradient of the mean listwise loss of a small batch with
/// respect to every parameter of `variant`. Dropout runs in train mode with
/// fixed mask seeds.
pub fn model_check(variant: Variant, seed: u64, points: usize, h: f64) -> Result<GradRow> {
    let model = tiny_model(variant)?;
    let mut worst = 0.0f64;
    let mut coords = 0;
    for p in 0..points as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (p << 32) ^ 0x5A);
        let mut store = model.init_params::<f64>(rng.gen());
        if let Some(w) = store.get_mut(W_NAME) {
            // keep clear of the clamp's kink at 0
            w.values_mut()[0] = rng.gen_range(0.2..0.8);
        }
        let (titles, samples) = tiny_batch(&mut rng)?;
        let mask_seed: u64 = rng.gen();
        let m = model.clone();
        let f = params_fn(&store, move |t, s| {
            let refs: Vec<&TrainSample> = samples.iter().collect();
            batch_loss(&m, t, s, &titles, &refs, &mut ForwardCtx::train(m.config.dropout, mask_seed))
        });
        let point = store.flatten();
        coords = point.len();
        worst = worst.max(grad_check(f, &point, h)?.max_rel_error);
    }
    Ok(GradRow {
        name: variant.to_string(),
        points,
        coordinates: coords,
        max_rel_error: worst,
    })
}
