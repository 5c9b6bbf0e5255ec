use proptest::prelude::*;

use super::*;
use crate::data::Corpus;
use crate::model::Variant;
use crate::numkernel::grad_check;
use crate::synth::{generate_corpus, SynthConfig};

fn imp(candidates: Vec<usize>, labels: Vec<u8>) -> EvalImpression {
    EvalImpression {
        history: vec![7, 8],
        user: 2,
        candidates,
        labels,
    }
}

#[test]
fn exact_fit_uses_all_negatives() {
    let s = build_training_samples(&imp(vec![10, 11, 12, 13, 14], vec![0, 1, 0, 0, 0]), 4, 3).unwrap();
    assert_eq!(s.len(), 1);
    assert_eq!(s[0].positive, 11);
    let mut negs = s[0].negatives.clone();
    negs.sort_unstable();
    assert_eq!(negs, vec![10, 12, 13, 14]);
    assert_eq!((s[0].history.clone(), s[0].user), (vec![7, 8], 2));
}

#[test]
fn few_negatives_sampled_with_replacement() {
    let s = build_training_samples(&imp(vec![1, 2, 3], vec![1, 0, 0]), 4, 5).unwrap();
    assert_eq!(s[0].negatives.len(), 4);
    assert!(s[0].negatives.iter().all(|n| [2, 3].contains(n)));
}

#[test]
fn degenerate_impressions() {
    assert!(build_training_samples(&imp(vec![1], vec![1]), 4, 0).unwrap().is_empty());
    assert!(build_training_samples(&imp(vec![1, 2], vec![0, 0]), 4, 0).unwrap().is_empty());
    assert!(build_training_samples(&imp(vec![1, 2], vec![1, 0]), 0, 0).is_err());
    let two = build_training_samples(&imp(vec![1, 2, 3], vec![1, 1, 0]), 2, 0).unwrap();
    assert_eq!(two.iter().map(|s| s.positive).collect::<Vec<_>>(), vec![1, 2]);
}

proptest! {
    #[test]
    fn clicked_never_negative(labels in prop::collection::vec(0u8..2, 1..12), s in 1usize..6, seed: u64) {
        let cands: Vec<usize> = (100..100 + labels.len()).collect();
        let samples = build_training_samples(&imp(cands.clone(), labels.clone()), s, seed).unwrap();
        let clicked: Vec<usize> = cands.iter().zip(&labels).filter(|(_, &l)| l == 1).map(|(&c, _)| c).collect();
        let has_neg = labels.contains(&0);
        prop_assert_eq!(samples.len(), if has_neg { clicked.len() } else { 0 });
        for smp in &samples {
            prop_assert_eq!(smp.negatives.len(), s);
            prop_assert!(clicked.contains(&smp.positive));
            prop_assert!(smp.negatives.iter().all(|n| !clicked.contains(n)));
        }
    }
}

#[test]
fn listwise_loss_values() {
    assert!((listwise_softmax_loss(&[0.3; 5]) - 5f64.ln()).abs() < 1e-12);
    assert!(listwise_softmax_loss(&[200.0, 0.0, 0.0, 0.0, 0.0]) < 1e-80);
    let e = std::f64::consts::E;
    assert!((listwise_softmax_loss(&[1.0, 0.0, 0.0, 0.0, 0.0]) - -(e / (e + 4.0)).ln()).abs() < 1e-12);
    // stable for large magnitudes
    assert!((listwise_softmax_loss(&[1000.0, 1000.0]) - 2f64.ln()).abs() < 1e-12);
}

#[test]
fn tape_loss_matches_closed_form_and_finite_differences() {
    let point = [0.4, -1.2, 0.0, 2.5, 0.7];
    let f = |x: &[f64]| {
        let mut t = Tape::<f64>::new();
        let v = t.leaf(1, 5, x.to_vec(), true)?;
        let l = t.softmax_xent(v, 0)?;
        let value = t.scalar_value(l);
        t.backward(l)?;
        Ok((value, t.grad(v).unwrap().to_vec()))
    };

    assert!((f(&point).unwrap().0 - listwise_softmax_loss(&point)).abs() < 1e-12);
    let r = grad_check(f, &point, 1e-5).unwrap();
    assert!(r.max_rel_error < 1e-3, "{r:?}");
}

#[test]
fn pad_truncate() {
    let long: Vec<usize> = (1..=60).collect();
    let (ids, mask) = pad_truncate_history(&long, 50);
    assert_eq!(ids, (11..=60).collect::<Vec<_>>());
    assert!(mask.iter().all(|&m| m));
    let (ids, mask) = pad_truncate_history(&[4, 5, 6], 50);
    assert_eq!(ids.len(), 50);
    assert_eq!(&ids[47..], &[4, 5, 6]);
    assert!(ids[..47].iter().all(|&i| i == PAD_ID));
    assert_eq!(mask.iter().filter(|&&m| m).count(), 3);
    assert!(mask[47..].iter().all(|&m| m));
    let (ids, mask) = pad_truncate_history(&[], 4);
    assert_eq!((ids, mask), (vec![PAD_ID; 4], vec![false; 4]));
}

pub(crate) fn toy(n_users: usize, impressions_per_user: usize, seed: u64) -> Corpus {
    let g = generate_corpus(&SynthConfig {
        n_users,
        n_news: 80,
        n_topics: 4,
        impressions_per_user,
        candidates: 5,
        history_len: (2, 6),
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    Corpus::from_tsv(&g.news_tsv, &g.behaviors_tsv).unwrap()
}

pub(crate) fn small_config(variant: Variant) -> TrainConfig {
    TrainConfig {
        variant,
        d_model: 8,
        heads: 2,
        word_dim: 8,
        lr: 1e-2,
        k: 2,
        n_max: 10,
        l_max: 10,
        batch: 8,
        epochs: 2,
        seed: 11,
        dropout: 0.1,
        min_count: 1,
        ..TrainConfig::default()
    }
}

fn setup(variant: Variant) -> (TrainConfig, Prepared, Recommender, Vec<EvalImpression>, Vec<EvalImpression>) {
    let corpus = toy(6, 4, 1);
    let cfg = small_config(variant);
    let all: Vec<usize> = (0..corpus.impressions.len()).collect();
    let (train_idx, valid_idx) = all.split_at(18);
    let prep = Prepared::new(&corpus, train_idx, cfg.min_count, cfg.l_max);
    let model = Recommender::new(prep.model_config(&cfg)).unwrap();
    let tr = prep.resolve(&corpus, train_idx, cfg.n_max, cfg.order, cfg.seed);
    let va = prep.resolve(&corpus, valid_idx, cfg.n_max, cfg.order, cfg.seed);
    (cfg, prep, model, tr, va)
}

#[test]
fn resolve_truncates_and_maps_users() {
    let corpus = toy(3, 3, 2);
    let all: Vec<usize> = (0..corpus.impressions.len()).collect();
    let prep = Prepared::new(&corpus, &all[..4], 1, 30);
    let r = prep.resolve(&corpus, &all, 3, OrderMode::Identity, 0);
    for (i, e) in r.iter().enumerate() {
        let raw = &corpus.impressions[i];
        let full: Vec<usize> = raw.history.iter().map(|h| corpus.index_of(h).unwrap()).collect();
        assert_eq!(e.history, full[full.len().saturating_sub(3)..]);
        assert_eq!(e.labels.len(), e.candidates.len());
        let known = all[..4].iter().any(|&j| corpus.impressions[j].user_id == raw.user_id);
        assert_eq!(e.user != 0, known);
    }
    let inv = prep.resolve(&corpus, &all, 3, OrderMode::Inverse, 0);
    let mut back = inv[0].history.clone();
    back.reverse();
    assert_eq!(back, r[0].history);
}

#[test]
fn initial_loss_near_uniform_for_small_init() {
    for variant in Variant::ALL {
        let (cfg, prep, model, tr, _) = setup(variant);
        let mut p = model.init_params::<f32>(4);
        for (_, t) in p.iter_mut() {
            t.values_mut().iter_mut().for_each(|x| *x *= 0.1);
        }
        let samples: Vec<TrainSample> = tr
            .iter()
            .flat_map(|i| build_training_samples(i, cfg.neg, 0).unwrap())
            .collect();
        let refs: Vec<&TrainSample> = samples.iter().collect();
        let mut tape = Tape::new();
        let l = batch_loss(&model, &mut tape, &p, &prep.titles, &refs, &mut ForwardCtx::eval()).unwrap();
        let v = tape.scalar_value(l) as f64;
        assert!(v >= 0.0 && (v - 5f64.ln()).abs() < 0.05, "{variant}: {v}");
    }
}

#[test]
fn one_small_step_lowers_sample_loss() {
    let (_, prep, model, tr, _) = setup(Variant::TempRec);
    let sample = build_training_samples(&tr[5], 4, 0).unwrap().remove(0);
    let cfg = AdamConfig {
        lr: 1e-5,
        ..AdamConfig::default()
    };
    for seed in 0..20 {
        let mut p = model.init_params::<f64>(seed);
        p.get_mut("temprec.w").unwrap().values_mut()[0] = 0.3;
        let loss_of = |p: &ModelParams<f64>| {
            let mut tape = Tape::new();
            let l = batch_loss(&model, &mut tape, p, &prep.titles, &[&sample], &mut ForwardCtx::eval()).unwrap();
            (tape.scalar_value(l), tape, l)
        };
        let (before, mut tape, l) = loss_of(&p);
        tape.backward(l).unwrap();
        for (name, g) in tape.param_grads() {
            let t = p.get_mut(&name).unwrap();
            let mut st = AdamState::new(t.len(), cfg);
            adam_step(t.values_mut(), &g, &mut st).unwrap();
        }
        let (after, _, _) = loss_of(&p);
        assert!(after < before, "seed {seed}: {before} -> {after}");
    }
}

#[test]
fn training_is_deterministic_and_keeps_frozen_rows() {
    for variant in [Variant::TempRec, Variant::Lstur] {
        let (cfg, prep, model, tr, va) = setup(variant);
        let run = || train(&cfg, &model, &prep.titles, &tr, &va, model.init_params(cfg.seed)).unwrap();
        let a = run();
        let b = run();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.params.to_checkpoint_bytes(), b.params.to_checkpoint_bytes());
        assert_eq!(a.trace.len(), 2);
        assert!(a.trace.iter().all(|e| e.valid.is_some() && e.loss.is_finite()));
        let best = a.trace.iter().map(|e| e.valid.as_ref().unwrap().auc).fold(f64::MIN, f64::max);
        assert_eq!(a.trace[a.best_epoch].valid.as_ref().unwrap().auc, best);
        for (name, row) in model.frozen_rows() {
            let t = a.params.get(name).unwrap();
            assert!(t.row(row).iter().all(|&x| x == 0.0), "{name} row {row}");
        }
    }
}

#[test]
fn empty_training_split_rejected() {
    let (cfg, prep, model, _, va) = setup(Variant::NrmsPlain);
    let e = train(&cfg, &model, &prep.titles, &[], &va, model.init_params(0)).unwrap_err();
    assert!(matches!(e, Error::Config(_)));
    let no_epochs = TrainConfig { epochs: 0, ..cfg };
    assert!(train(&no_epochs, &model, &prep.titles, &va, &[], model.init_params(0)).is_err());
}

#[test]
fn frozen_scorer_matches_tape_scores() {
    let (cfg, prep, model, tr, _) = setup(Variant::NrmsCausal);
    let p = model.init_params::<f32>(cfg.seed);
    let frozen = FrozenModel::new(&model, &p, &prep.titles, 1).unwrap();
    let imp = &tr[3];
    let scores = frozen.score(imp).unwrap();
    let mut tape = Tape::new();
    let mut ctx = ForwardCtx::eval();
    let h: Vec<Var> = imp
        .history
        .iter()
        .map(|&i| model.encode_news(&mut tape, &p, &prep.titles[i], &mut ctx).unwrap())
        .collect();
    let c: Vec<Var> = imp
        .candidates
        .iter()
        .map(|&i| model.encode_news(&mut tape, &p, &prep.titles[i], &mut ctx).unwrap())
        .collect();
    let c = tape.concat_rows(&c).unwrap();
    let s = model.score(&mut tape, &p, &h, imp.user, c, &mut ctx).unwrap();
    let direct: Vec<f64> = tape.value(s).iter().map(|&x| x as f64).collect();
    assert_eq!(scores, direct);
    let threaded = FrozenModel::new(&model, &p, &prep.titles, 2).unwrap();
    assert_eq!(threaded.score(imp).unwrap(), scores);
}

#[test]
fn initial_w_follows_config() {
    let (cfg, _, model, _, _) = setup(Variant::TempRec);
    let cfg = TrainConfig { w_init: 0.25, ..cfg };
    let p = initial_params(&model, &cfg, None).unwrap();
    assert_eq!(p.get(W_NAME).unwrap().values()[0], 0.25);
    // the module-level initialisation is still exactly zero
    assert_eq!(model.init_params::<f32>(cfg.seed).get(W_NAME).unwrap().values()[0], 0.0);
}
