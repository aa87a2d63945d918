use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn image<S: Scalar>(h: usize, w: usize, seed: u64) -> Tensor<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..3 * h * w).map(|_| S::of(rng.random_range(0.0..1.0))).collect();
    Tensor::from_vec(&[3, h, w], data).unwrap()
}

fn tiny(dense: bool) -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            stem_channels: 2,
            stage_channels: vec![2, 4],
            groups: 2,
        },
        dense_skips: dense,
        seed: 3,
        variance_init: 0.05,
    }
}

#[test]
fn pyramid_strides() {
    let m = Uaed::<f32>::new(ModelConfig::default()).unwrap();
    let pyr = m.encode(&image(64, 64, 1)).unwrap();
    let sides: Vec<(usize, usize)> = pyr.stages.iter().map(|t| (t.chw().1, t.chw().2)).collect();
    assert_eq!(sides, vec![(32, 32), (16, 16), (8, 8), (4, 4)]);
    assert_eq!(pyr.scales, vec![2, 4, 8, 16]);
    assert_eq!(pyr.stem.chw(), (8, 64, 64));

    let big = m.encode(&image(128, 96, 1)).unwrap();
    for (a, b) in pyr.stages.iter().zip(&big.stages) {
        assert_eq!(b.chw().1, 2 * a.chw().1);
        assert_eq!(b.chw().2, a.chw().2 * 3 / 2);
    }
}

#[test]
fn encode_is_deterministic_and_validates_shape() {
    let m = Uaed::<f32>::new(ModelConfig::default()).unwrap();
    let img = image(32, 48, 2);
    assert_eq!(m.encode(&img).unwrap(), m.encode(&img).unwrap());
    assert!(m.encode(&image(40, 32, 2)).is_err());
    assert!(m.encode(&image(16, 16, 2)).is_err());
    let gray = Tensor::<f32>::zeros(&[1, 32, 32]);
    assert!(m.encode(&gray).is_err());
}

#[test]
fn heads_keep_shape_and_variance_is_non_negative() {
    for seed in 0..3 {
        let cfg = ModelConfig {
            seed,
            ..ModelConfig::default()
        };
        let mut m = Uaed::<f32>::new(cfg).unwrap();
        // randomize every parameter to stress the softplus
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in m.params_mut().values_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-3.0..3.0));
        }
        let pred = m.predict_distribution(&image(32, 64, seed)).unwrap();
        assert_eq!(pred.dims(), (32, 64));
        assert!(pred.var.as_slice().iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn initial_variance_is_near_configured_value() {
    let m = Uaed::<f64>::new(ModelConfig::default()).unwrap();
    let pred = m.predict_distribution(&image(64, 64, 4)).unwrap();
    let mean = pred.var.as_slice().iter().sum::<f64>() / pred.var.len() as f64;
    assert!((mean - 0.05).abs() < 0.02, "{mean}");
}

#[test]
fn variance_decoder_does_not_touch_the_mean() {
    let mut m = Uaed::<f64>::new(ModelConfig::default()).unwrap();
    let img = image(32, 32, 5);
    let pyr = m.encode(&img).unwrap();
    let mu = m.decode_mean(&pyr).unwrap();
    let var = m.decode_variance(&pyr).unwrap();
    for id in m.variance_branch_params() {
        m.params_mut().get_mut(id).data_mut().iter_mut().for_each(|v| *v += 0.3);
    }
    assert_eq!(m.decode_mean(&pyr).unwrap(), mu);
    assert_ne!(m.decode_variance(&pyr).unwrap(), var);
}

#[test]
fn branch_parameter_sets_are_disjoint() {
    let m = Uaed::<f32>::new(ModelConfig::default()).unwrap();
    let a = m.mean_branch_params();
    let b = m.variance_branch_params();
    let e = m.encoder_params();
    assert!(a.iter().all(|id| !b.contains(id) && !e.contains(id)));
    assert!(b.iter().all(|id| !e.contains(id)));
    assert_eq!(a.len() + b.len() + e.len(), m.params().len());
}

fn weighted_loss(pred: &DistributionPrediction<f64>, r: &[f64], q: &[f64]) -> f64 {
    let a: f64 = pred.mu.as_slice().iter().zip(r).map(|(x, y)| x * y).sum();
    let b: f64 = pred.var.as_slice().iter().zip(q).map(|(x, y)| x * y).sum();
    a + b
}

fn check_model_gradients(dense: bool) {
    let m = Uaed::<f64>::new(tiny(dense)).unwrap();
    let img = image(8, 8, 6);
    let r: Vec<f64> = (0..64).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
    let q: Vec<f64> = (0..64).map(|i| ((i * 3) % 4) as f64 - 1.5).collect();
    let (_, cache) = m.forward_train(&img, Branches::Both).unwrap();
    let mut grads = m.params().zero_grads();
    let d_mu = Grid::from_vec(8, 8, r.clone()).unwrap();
    let d_var = Grid::from_vec(8, 8, q.clone()).unwrap();
    m.backward(&cache, &d_mu, Some(&d_var), &mut grads);
    let h = 1e-6;
    let mut checked = 0;
    for (pi, t) in m.params().values().iter().enumerate() {
        for idx in (0..t.len()).step_by(3.max(t.len() / 4)) {
            let mut mp = m.clone();
            mp.params_mut().values_mut()[pi].data_mut()[idx] += h;
            let mut mm = m.clone();
            mm.params_mut().values_mut()[pi].data_mut()[idx] -= h;
            let lp = weighted_loss(&mp.predict_distribution(&img).unwrap(), &r, &q);
            let lm = weighted_loss(&mm.predict_distribution(&img).unwrap(), &r, &q);
            let fd = (lp - lm) / (2.0 * h);
            let an = grads.tensors[pi].data()[idx];
            let name = &m.params().names()[pi];
            assert!(
                (fd - an).abs() <= 1e-5 * (1.0 + fd.abs()),
                "{name}[{idx}]: fd {fd} vs analytic {an}"
            );
            checked += 1;
        }
    }
    assert!(checked > 40);
}

#[test]
fn backward_matches_finite_differences() {
    check_model_gradients(false);
}

#[test]
fn backward_matches_finite_differences_with_dense_skips() {
    check_model_gradients(true);
}

#[test]
fn branch_losses_do_not_leak_into_the_other_decoder() {
    let m = Uaed::<f64>::new(tiny(false)).unwrap();
    let img = image(8, 8, 7);
    let (_, cache) = m.forward_train(&img, Branches::Both).unwrap();
    let ones = Grid::filled(8, 8, 1.0);
    let zeros = Grid::filled(8, 8, 0.0);

    let mut g = m.params().zero_grads();
    m.backward(&cache, &ones, Some(&zeros), &mut g);
    assert!(m.variance_branch_params().iter().all(|&id| g.get(id).data().iter().all(|&v| v == 0.0)));

    let mut g = m.params().zero_grads();
    m.backward(&cache, &zeros, Some(&ones), &mut g);
    assert!(m.mean_branch_params().iter().all(|&id| g.get(id).data().iter().all(|&v| v == 0.0)));
    assert!(m.variance_branch_params().iter().any(|&id| g.get(id).data().iter().any(|&v| v != 0.0)));
}

#[test]
fn train_forward_agrees_with_inference() {
    let m = Uaed::<f32>::new(ModelConfig::default()).unwrap();
    let img = image(32, 32, 8);
    let (pred, _) = m.forward_train(&img, Branches::Both).unwrap();
    assert_eq!(pred, m.predict_distribution(&img).unwrap());
    let (mean_only, _) = m.forward_train(&img, Branches::MeanOnly).unwrap();
    assert_eq!(mean_only.mu, pred.mu);
}

#[test]
fn archive_round_trip_preserves_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.uaed");
    let m = Uaed::<f32>::new(tiny(true)).unwrap();
    m.save(&path).unwrap();
    let back = Uaed::<f32>::load(&path).unwrap();
    assert_eq!(back.config(), m.config());
    assert_eq!(back.named_tensors(), m.named_tensors());
    let bytes = std::fs::read(&path).unwrap();
    back.save(&path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
}
