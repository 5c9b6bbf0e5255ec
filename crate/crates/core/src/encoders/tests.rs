use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::numkernel::{ModelParams, Tape};

const D: usize = 8;

fn random_rows(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * D).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn permute(rows: &[f64], perm: &[usize]) -> Vec<f64> {
    perm.iter().flat_map(|&p| rows[p * D..(p + 1) * D].to_vec()).collect()
}

fn transformer(variant: UserVariant, seed: u64) -> (TransformerUserEncoder, ModelParams<f64>) {
    let enc = TransformerUserEncoder::new(variant, D, 2, 10).unwrap();
    let mut store = ModelParams::new();
    enc.init(&mut store, &mut ChaCha8Rng::seed_from_u64(seed));
    (enc, store)
}

fn encode_t(enc: &TransformerUserEncoder, store: &ModelParams<f64>, rows: &[f64]) -> Vec<f64> {
    let mut t = Tape::new();
    let r = t.constant(rows.len() / D, D, rows.to_vec()).unwrap();
    let u = enc.encode(&mut t, store, r, &mut ForwardCtx::eval()).unwrap();
    t.value(u).to_vec()
}

fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-12))
        .fold(0.0, f64::max)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn plain_user_encoding_is_permutation_invariant() {
    for seed in 0..5 {
        let (enc, store) = transformer(UserVariant::Plain, seed);
        let rows = random_rows(100 + seed, 6);
        let a = encode_t(&enc, &store, &rows);
        let b = encode_t(&enc, &store, &permute(&rows, &[5, 2, 0, 4, 1, 3]));
        assert!(max_rel_diff(&a, &b) < 1e-5);
    }
}

#[test]
fn zero_position_table_equals_plain() {
    let (plain, store) = transformer(UserVariant::Plain, 7);
    let pos = TransformerUserEncoder::new(UserVariant::PosEmb, D, 2, 10).unwrap();
    let mut pos_store = store.clone();
    pos_store.insert(POS_EMB, crate::numkernel::Tensor::zeros(vec![10, D]));
    let rows = random_rows(3, 4);
    assert_eq!(encode_t(&plain, &store, &rows), encode_t(&pos, &pos_store, &rows));
}

#[test]
fn order_aware_variants_react_to_reversal() {
    for variant in [UserVariant::Causal, UserVariant::PosEmb] {
        for seed in 0..10 {
            let (enc, store) = transformer(variant, seed);
            let rows = random_rows(50 + seed, 5);
            let a = encode_t(&enc, &store, &rows);
            let b = encode_t(&enc, &store, &permute(&rows, &[4, 3, 2, 1, 0]));
            assert!(max_abs_diff(&a, &b) > 1e-3, "{variant} seed {seed}");
        }
    }
}

#[test]
fn pos_emb_rejects_long_history() {
    let (enc, store) = transformer(UserVariant::PosEmb, 1);
    let mut t = Tape::new();
    let r = t.constant(11, D, random_rows(1, 11)).unwrap();
    assert!(enc.encode(&mut t, &store, r, &mut ForwardCtx::eval()).is_err());
}

fn gru(seed: u64) -> (GruUserEncoder, ModelParams<f64>) {
    let enc = GruUserEncoder::new(D, 3).unwrap();
    let mut store = ModelParams::new();
    enc.init(&mut store, &mut ChaCha8Rng::seed_from_u64(seed));
    (enc, store)
}

fn encode_g(enc: &GruUserEncoder, store: &ModelParams<f64>, rows: &[f64], user: usize) -> Vec<f64> {
    let mut t = Tape::new();
    let r = (!rows.is_empty()).then(|| t.constant(rows.len() / D, D, rows.to_vec()).unwrap());
    let u = enc.encode(&mut t, store, r, user).unwrap();
    t.value(u).to_vec()
}

#[test]
fn gru_empty_history_keeps_short_term_half_zero() {
    let (enc, store) = gru(1);
    let u = encode_g(&enc, &store, &[], 2);
    assert_eq!(&u[..D / 2], &[0.0; D / 2]);
    assert_eq!(&u[D / 2..], store.get(USER_ID_EMB).unwrap().row(2));
}

#[test]
fn gru_single_step_matches_gate_equations() {
    let (enc, store) = gru(2);
    let x = random_rows(9, 1);
    let u = encode_g(&enc, &store, &x, 1);
    let hd = D / 2;
    let get = |n: &str| store.get(n).unwrap().values().to_vec();
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    // h0 = 0, so the recurrent terms vanish.
    let gate = |g: &str, j: usize| {
        let w = get(&format!("user.gru.w{g}"));
        let b = get(&format!("user.gru.b{g}"));
        (0..D).map(|i| x[i] * w[i * hd + j]).sum::<f64>() + b[j]
    };
    for j in 0..hd {
        let z = sig(gate("z", j));
        let n = gate("n", j).tanh();
        let h = (1.0 - z) * n;
        assert!((u[j] - h).abs() < 1e-12, "unit {j}: {} vs {h}", u[j]);
    }
    assert_eq!(&u[hd..], store.get(USER_ID_EMB).unwrap().row(1));
}

#[test]
fn gru_is_order_sensitive_and_bounded() {
    for seed in 0..5 {
        let (enc, store) = gru(seed);
        let rows = random_rows(seed + 20, 6);
        let a = encode_g(&enc, &store, &rows, 0);
        let b = encode_g(&enc, &store, &permute(&rows, &[5, 4, 3, 2, 1, 0]), 0);
        assert!(max_abs_diff(&a[..D / 2], &b[..D / 2]) > 1e-6);
        assert!(a[..D / 2].iter().all(|v| v.abs() < 1.0));
        assert_eq!(&a[D / 2..], &[0.0; D / 2]);
    }
}

#[test]
fn gru_user_index_checked() {
    let (enc, store) = gru(3);
    let mut t = Tape::new();
    assert!(enc.encode(&mut t, &store, None, 4).is_err());
}

#[test]
fn click_score_is_bilinear() {
    let mut t = Tape::<f64>::new();
    let u = t.constant(1, 3, vec![0.5, -1.0, 2.0]).unwrap();
    let c = t.constant(1, 3, vec![1.0, 0.25, -0.5]).unwrap();
    let s = click_scores(&mut t, u, c).unwrap();
    let c3 = t.scale(c, 3.0);
    let s3 = click_scores(&mut t, u, c3).unwrap();
    assert_eq!(t.value(s3)[0], 3.0 * t.value(s)[0]);
}

#[test]
fn dropout_seeds_follow_call_order() {
    let mut t = Tape::<f64>::new();
    let x = t.constant(2, 4, vec![1.0; 8]).unwrap();
    let mut a = ForwardCtx::train(0.5, 9);
    let mut b = ForwardCtx::train(0.5, 9);
    let a1 = a.dropout(&mut t, x).unwrap();
    let b1 = b.dropout(&mut t, x).unwrap();
    assert_eq!(t.value(a1), t.value(b1));
    let mut e = ForwardCtx::eval();
    assert_eq!(e.dropout(&mut t, x).unwrap(), x);
}
