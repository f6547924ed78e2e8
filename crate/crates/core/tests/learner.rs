use evjrs_core::instances::{
    generate_instance, presets, raw_features, FeatureTensor, NormStats, TokenType,
};
use evjrs_core::learner::*;
use evjrs_core::mip::{build_model, Mode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_config(n_per_ev: usize, horizon: usize) -> ModelConfig {
    ModelConfig {
        d_model: 8,
        heads: 2,
        ffn_hidden: 12,
        classifier_hidden: 10,
        n_per_ev,
        horizon,
    }
}

fn features(seed: u64, evs: usize) -> FeatureTensor {
    let inst = generate_instance(seed, evs, &presets::tiny_config()).unwrap();
    let raw = raw_features(&inst, 0).unwrap();
    let mut t = raw.clone();
    NormStats::fit([&raw]).apply(&mut t);
    t
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
    (0..n).map(|_| u8::from(rng.gen_bool(0.4))).collect()
}

fn loss_of(params: &TransformerParams, f: &FeatureTensor, y: &[u8]) -> f64 {
    let (p, _) = forward(params, f).unwrap();
    bce_loss(&p.data, y).unwrap()
}

fn perturbed(
    params: &TransformerParams,
    tensor: usize,
    entry: usize,
    delta: f64,
) -> TransformerParams {
    let mut p = params.clone();
    p.tensors_mut()[tensor][entry] += delta;
    p
}

#[test]
fn gradients_match_central_differences() {
    let cfg = small_config(37, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut params = TransformerParams::init(&cfg, 5).unwrap();
    // Move gains and biases off their initial values so every path is exercised.
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.gen_range(-0.2..0.2);
        }
    }
    let f = features(3, 2);
    let y = random_labels(&mut rng, 2 * 37);
    let (_, cache) = forward(&params, &f).unwrap();
    let mut grads = params.zeros_like();
    backward(&params, &cache, &y, 1.0, &mut grads).unwrap();
    let h = 1e-5;
    let names = TransformerParams::tensor_names();
    let mut worst = 0.0f64;
    for (ti, g) in grads.tensors().iter().enumerate() {
        for (j, &analytic) in g.iter().enumerate() {
            let up = loss_of(&perturbed(&params, ti, j, h), &f, &y);
            let down = loss_of(&perturbed(&params, ti, j, -h), &f, &y);
            let numeric = (up - down) / (2.0 * h);
            // Entries below 1e-6 sit at the finite-difference noise floor.
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            assert!(
                rel <= 1e-4,
                "{}[{}]: analytic {analytic:e} numeric {numeric:e}",
                names[ti],
                j
            );
            worst = worst.max(rel);
        }
    }
    println!("worst relative error {worst:e}");
}

#[test]
fn classifier_bias_gradient_uniform_labels() {
    let cfg = small_config(37, 6);
    let params = TransformerParams::init(&cfg, 8).unwrap();
    let f = features(4, 2);
    let y = vec![1u8; 74];
    let (_, cache) = forward(&params, &f).unwrap();
    let mut grads = params.zeros_like();
    backward(&params, &cache, &y, 1.0, &mut grads).unwrap();
    let last = params.tensors().len() - 1;
    for j in 0..37 {
        let h = 1e-5;
        let numeric = (loss_of(&perturbed(&params, last, j, h), &f, &y)
            - loss_of(&perturbed(&params, last, j, -h), &f, &y))
            / (2.0 * h);
        assert!((grads.cls_b3[j] - numeric).abs() <= 1e-4 * numeric.abs().max(1e-8));
    }
}

#[test]
fn absent_token_type_gets_no_gradient() {
    let cfg = small_config(37, 6);
    let params = TransformerParams::init(&cfg, 2).unwrap();
    let mut f = features(5, 2);
    // Drop the PV row.
    let pv = f
        .token_types
        .iter()
        .position(|&t| t == TokenType::Pv)
        .unwrap();
    f.data.drain(pv * f.cols..(pv + 1) * f.cols);
    f.token_types.remove(pv);
    f.rows -= 1;
    let (_, cache) = forward(&params, &f).unwrap();
    let mut grads = params.zeros_like();
    backward(&params, &cache, &vec![0; 74], 1.0, &mut grads).unwrap();
    assert!(grads
        .type_embed
        .row(TokenType::Pv.index())
        .iter()
        .all(|&g| g == 0.0));
    assert!(grads
        .type_embed
        .row(TokenType::Ev.index())
        .iter()
        .any(|&g| g != 0.0));
}

#[test]
fn output_shape_follows_fleet_size() {
    let cfg = small_config(37, 6);
    let params = TransformerParams::init(&cfg, 1).unwrap();
    for e in [1, 3, 5] {
        let (p, _) = forward(&params, &features(6, e)).unwrap();
        assert_eq!((p.rows, p.cols), (e, 37));
        let inst = generate_instance(6, e, &presets::tiny_config()).unwrap();
        assert_eq!(
            build_model(&inst, Mode::Deterministic(0))
                .unwrap()
                .binary_cols()
                .count(),
            p.data.len()
        );
    }
}

#[test]
fn shape_errors_name_the_dimension() {
    let params = TransformerParams::init(&small_config(37, 7), 1).unwrap();
    let err = forward(&params, &features(1, 1)).err().unwrap();
    assert!(err.to_string().contains("timesteps"), "{err}");
    assert!(ModelConfig {
        heads: 3,
        ..small_config(37, 6)
    }
    .validate()
    .is_err());
}

#[test]
fn zero_weights_give_one_half() {
    let mut params = TransformerParams::init(&small_config(37, 6), 1).unwrap();
    for t in params.tensors_mut() {
        t.iter_mut().for_each(|v| *v = 0.0);
    }
    let (p, _) = forward(&params, &features(2, 3)).unwrap();
    assert!(p.data.iter().all(|&v| v == 0.5));
}

#[test]
fn attention_rows_are_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for seed in 0..5 {
        let mut params = TransformerParams::init(&small_config(37, 6), seed).unwrap();
        for t in params.tensors_mut() {
            t.iter_mut().for_each(|v| *v += rng.gen_range(-1.0..1.0));
        }
        for a in attention_weights(&params, &features(seed, 3)).unwrap() {
            for r in 0..a.rows {
                let s: f64 = a.row(r).iter().sum();
                assert!((s - 1.0).abs() <= 1e-12);
                assert!(a.row(r).iter().all(|&w| w >= 0.0));
            }
        }
    }
}

#[test]
fn layer_norm_rows_are_standardised() {
    let params = TransformerParams::init(&ModelConfig::new(37, 6), 3).unwrap();
    let h = encode(&params, &features(9, 4)).unwrap();
    for r in 0..h.rows {
        let row = h.row(r);
        let mean = row.iter().sum::<f64>() / row.len() as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64;
        assert!(
            mean.abs() <= 1e-6 && (var - 1.0).abs() <= 1e-6,
            "row {r}: mean {mean} var {var}"
        );
    }
}

#[test]
fn permuting_evs_permutes_outputs() {
    let params = TransformerParams::init(&small_config(37, 6), 11).unwrap();
    let f = features(12, 3);
    let (p, _) = forward(&params, &f).unwrap();
    let first = f.first_ev_row();
    let perm = [2usize, 0, 1];
    let mut g = f.clone();
    for (to, &from) in perm.iter().enumerate() {
        let src = f.row(first + from).to_vec();
        g.data[(first + to) * f.cols..(first + to + 1) * f.cols].copy_from_slice(&src);
    }
    let (q, _) = forward(&params, &g).unwrap();
    for (to, &from) in perm.iter().enumerate() {
        for (a, b) in q.row(to).iter().zip(p.row(from)) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn bce_cases() {
    let y = [1u8, 0, 1, 0];
    assert!(bce_loss(&[1.0, 0.0, 1.0, 0.0], &y).unwrap() < 1e-11);
    assert!((bce_loss(&[0.5; 4], &y).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p: Vec<f64> = (0..50).map(|_| rng.gen_range(0.01..0.99)).collect();
    let y: Vec<u8> = (0..50).map(|i| (i % 3 == 0) as u8).collect();
    let mut oracle = 0.0;
    for i in 0..50 {
        oracle += if y[i] == 1 {
            -p[i].ln()
        } else {
            -(1.0 - p[i]).ln()
        };
    }
    assert!((bce_loss(&p, &y).unwrap() - oracle / 50.0).abs() < 1e-14);
    assert!(bce_loss(&p, &y[..3]).is_err());
}

fn example(seed: u64, evs: usize, rng: &mut ChaCha8Rng) -> LabeledExample {
    let features = features(seed, evs);
    LabeledExample {
        labels: random_labels(rng, evs * 37),
        features,
    }
}

#[test]
fn one_step_descends_and_one_epoch_matches_it() {
    let cfg = small_config(37, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ex = example(1, 2, &mut rng);
    let tc = TrainConfig {
        batch_size: 1,
        epochs: 1,
        learning_rate: 1e-2,
        seed: 7,
        ..TrainConfig::default()
    };
    let params = TransformerParams::init(&cfg, tc.seed).unwrap();
    let before = loss_of(&params, &ex.features, &ex.labels);
    let (_, cache) = forward(&params, &ex.features).unwrap();
    let mut grads = params.zeros_like();
    backward(&params, &cache, &ex.labels, 1.0, &mut grads).unwrap();
    let mut manual = params.clone();
    Adam::new(&params, &tc).step(&mut manual, &grads);
    assert!(loss_of(&manual, &ex.features, &ex.labels) < before);
    let (trained, history) = train(std::slice::from_ref(&ex), &[], &cfg, &tc).unwrap();
    assert_eq!(trained, manual);
    assert_eq!(history.len(), 1);
    assert!((history[0].train_loss - before).abs() < 1e-15);
}

#[test]
fn training_is_seed_deterministic_and_mixes_sizes() {
    let cfg = small_config(37, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data: Vec<_> = (0..6)
        .map(|i| example(i, 2 + (i as usize % 3), &mut rng))
        .collect();
    let tc = TrainConfig {
        batch_size: 4,
        epochs: 3,
        seed: 1,
        ..TrainConfig::default()
    };
    let (a, ha) = train(&data, &data[..2], &cfg, &tc).unwrap();
    let (b, hb) = train(&data, &data[..2], &cfg, &tc).unwrap();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
    assert!(ha.iter().all(|e| e.validation_loss.is_some()));
    assert_eq!(
        train(&[], &[], &cfg, &tc).unwrap_err(),
        LearnError::EmptyDataset
    );
}

#[test]
fn calibration_cases() {
    let perfect = [(0.999, 1u8), (0.001, 0), (0.999, 1), (0.001, 0)];
    let t = thresholds_from_pairs(&perfect).unwrap();
    assert!((t.thr_0 - 0.999).abs() < 1e-15 && (t.thr_1 - 0.999).abs() < 1e-15);
    let t = thresholds_from_pairs(&[(0.5, 1), (0.5, 0)]).unwrap();
    assert_eq!((t.thr_0, t.thr_1), (0.5, 0.5));
    // p_t for y=1: 0.9, 0.7 -> 0.8; for y=0: 1-0.2, 1-0.4 -> 0.7.
    let t = thresholds_from_pairs(&[(0.9, 1), (0.2, 0), (0.7, 1), (0.4, 0)]).unwrap();
    assert!((t.thr_1 - 0.8).abs() < 1e-15 && (t.thr_0 - 0.7).abs() < 1e-15);
    assert_eq!(
        thresholds_from_pairs(&[(0.3, 0)]),
        Err(LearnError::MissingClass(1))
    );
}

fn constant_output(cfg: &ModelConfig, p: f64) -> TransformerParams {
    let mut params = TransformerParams::init(cfg, 1).unwrap();
    for t in params.tensors_mut() {
        t.iter_mut().for_each(|v| *v = 0.0);
    }
    let logit = (p / (1.0 - p)).ln();
    params.cls_b3.iter_mut().for_each(|b| *b = logit);
    params
}

#[test]
fn filter_cases() {
    let cfg = small_config(37, 6);
    let gen = evjrs_core::instances::GenConfig {
        scenarios: 2,
        ..presets::tiny_config()
    };
    let inst = generate_instance(3, 2, &gen).unwrap();
    let stats = NormStats::fit([&raw_features(&inst, 0).unwrap()]);
    let none = predict_and_filter(
        &constant_output(&cfg, 0.9),
        &Thresholds::VACUOUS,
        &stats,
        &inst,
    )
    .unwrap();
    assert!(none.is_empty());
    let all = predict_and_filter(
        &constant_output(&cfg, 0.9),
        &Thresholds {
            thr_0: 0.5,
            thr_1: 0.5,
        },
        &stats,
        &inst,
    )
    .unwrap();
    assert_eq!(all.len(), 2 * 2 * 37);
    assert!(all.fixed.values().all(|&v| v));
    let det = evjrs_core::instances::GenConfig {
        scenarios: 1,
        ..presets::tiny_config()
    };
    let inst = generate_instance(3, 2, &det).unwrap();
    let pa = predict_and_filter(
        &TransformerParams::init(&cfg, 4).unwrap(),
        &Thresholds {
            thr_0: 0.6,
            thr_1: 0.6,
        },
        &stats,
        &inst,
    )
    .unwrap();
    assert!(pa.len() <= 2 * 37);
}

#[test]
fn class_accuracy_at_half() {
    let acc = class_accuracy(&[(0.2, 0), (0.7, 0), (0.9, 1), (0.5, 1)]);
    assert_eq!(acc, [Some(50.0), Some(100.0)]);
}
