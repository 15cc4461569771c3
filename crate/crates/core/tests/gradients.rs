//! Analytic per-sample gradients against central finite differences.

use influence_ad_core::models::{Centroid, DsvddModel, VaeModel};
use influence_ad_core::numeric::{
    grad_dot, per_sample_gradient, Activation, FlatParams, MlpSpec, Objective, ParamLayout, Rng,
};
use influence_ad_oracles::{
    central_difference_gradient, max_relative_error, random_autoencoder, random_dsvdd,
    random_sample, random_vae, FD_STEP,
};
use proptest::prelude::*;
use std::sync::Arc;

fn check<O: Objective>(model: &O, params: &FlatParams, rng: &mut Rng) -> f64 {
    let x = random_sample(rng, model.input_dim());
    let noise = model.draw_noise(rng);
    let analytic = per_sample_gradient(model, params, &x, &noise).unwrap();
    let numeric = central_difference_gradient(model, params.values(), &x, &noise, FD_STEP).unwrap();
    max_relative_error(analytic.values(), &numeric)
}

#[test]
fn mse_gradients_match_finite_differences() {
    let mut rng = Rng::new(11);
    for case in 0..100 {
        let (model, params) = random_autoencoder(&mut rng);
        let err = check(&model, &params, &mut rng);
        assert!(err < 1e-5, "case {case}: rel err {err:e} for {:?}", model.spec().widths());
    }
}

#[test]
fn dsvdd_gradients_match_finite_differences() {
    let mut rng = Rng::new(12);
    for case in 0..100 {
        let (model, params) = random_dsvdd(&mut rng);
        let err = check(&model, &params, &mut rng);
        assert!(err < 1e-5, "case {case}: rel err {err:e}");
    }
}

#[test]
fn vae_gradients_match_finite_differences_with_frozen_noise() {
    let mut rng = Rng::new(13);
    for case in 0..100 {
        let (model, params) = random_vae(&mut rng);
        let err = check(&model, &params, &mut rng);
        assert!(err < 1e-4, "case {case}: rel err {err:e}");
    }
}

#[test]
fn relu_network_gradient_away_from_kinks() {
    let spec = MlpSpec::new(&[3, 5, 3], Activation::Relu).unwrap();
    let model = influence_ad_core::models::Autoencoder::new(spec.clone()).unwrap();
    let mut rng = Rng::new(21);
    let params =
        FlatParams::from_values(model.layout().clone(), spec.init_params(&mut rng)).unwrap();
    let x = [0.7, -0.4, 1.1];
    let analytic = per_sample_gradient(&model, &params, &x, &[]).unwrap();
    let numeric = central_difference_gradient(&model, params.values(), &x, &[], FD_STEP).unwrap();
    assert!(max_relative_error(analytic.values(), &numeric) < 1e-5);
}

#[test]
fn scalar_closed_form() {
    let m = Centroid::new(1);
    let g = per_sample_gradient(&m, &m.params(vec![0.0]).unwrap(), &[1.0], &[]).unwrap();
    assert_eq!(g.values(), &[-1.0]);
}

#[test]
fn dsvdd_center_gets_no_gradient() {
    let mut rng = Rng::new(5);
    let (model, params) = random_dsvdd(&mut rng);
    // the layout covers encoder weights only
    assert_eq!(model.layout().total_len(), model.encoder().param_count());
    let g = per_sample_gradient(&model, &params, &random_sample(&mut rng, model.input_dim()), &[])
        .unwrap();
    assert_eq!(g.len(), params.len());
}

#[test]
fn vae_gradient_rejects_wrong_noise_length() {
    let m = VaeModel::symmetric(3, &[4], 2, 2, Activation::Tanh).unwrap();
    let p = m.init_params(&mut Rng::new(1));
    assert!(per_sample_gradient(&m, &p, &[0.0; 3], &[0.0; 3]).is_err());
    assert!(per_sample_gradient(&m, &p, &[0.0; 2], &[0.0; 4]).is_err());
}

#[test]
fn zero_weight_dsvdd_with_zero_target_is_flat() {
    // encoder output is identically 0 and the center is 0: loss constant in theta
    let spec = DsvddModel::encoder_spec(2, &[3], 2).unwrap();
    let model = DsvddModel::new(spec, vec![0.0, 0.0]).unwrap();
    let p = FlatParams::zeros(model.layout().clone());
    let g = per_sample_gradient(&model, &p, &[0.3, -0.2], &[]).unwrap();
    assert!(g.values().iter().all(|&v| v == 0.0));
}

fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-10.0f64..10.0, n)
}

proptest! {
    #[test]
    fn grad_dot_symmetric_and_bilinear(
        a in vec_strategy(7), b in vec_strategy(7), c in vec_strategy(7),
        s in -3.0f64..3.0, t in -3.0f64..3.0,
    ) {
        let layout = Arc::new(ParamLayout::vector(7));
        let fp = |v: Vec<f64>| FlatParams::from_values(layout.clone(), v).unwrap();
        let (pa, pb, pc) = (fp(a.clone()), fp(b.clone()), fp(c.clone()));
        prop_assert_eq!(grad_dot(&pa, &pb).unwrap(), grad_dot(&pb, &pa).unwrap());
        let combo = fp(a.iter().zip(&b).map(|(x, y)| s * x + t * y).collect());
        let lhs = grad_dot(&combo, &pc).unwrap();
        let rhs = s * grad_dot(&pa, &pc).unwrap() + t * grad_dot(&pb, &pc).unwrap();
        let scale = 1.0 + lhs.abs().max(rhs.abs());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale, "{} vs {}", lhs, rhs);
        prop_assert!(grad_dot(&pa, &pa).unwrap() >= 0.0);
    }

    #[test]
    fn flatten_unflatten_is_bit_exact(seed in any::<u64>(), w1 in 1usize..8, w2 in 1usize..8, w3 in 1usize..8) {
        let spec = MlpSpec::new(&[w1, w2, w3], Activation::Tanh).unwrap();
        let layout = Arc::new(spec.layout(0));
        let values: Vec<f64> = {
            let mut rng = Rng::new(seed);
            (0..layout.total_len()).map(|_| rng.standard_normal() * 1e3).collect()
        };
        let p = FlatParams::from_values(layout.clone(), values).unwrap();
        let q = FlatParams::flatten(layout, &p.unflatten()).unwrap();
        prop_assert!(p.values().iter().zip(q.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
