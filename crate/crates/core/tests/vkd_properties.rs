mod common;

use proptest::prelude::*;
use rand::Rng as _;
use report_kg::extract::Report;
use report_kg::graph::{AblationConfig, ReportGraph};
use report_kg::labels::{Labels, NUM_LABELS};
use report_kg::pipeline::Pipeline;
use report_kg::sample;
use report_kg::tensor::gradcheck::check;
use report_kg::tensor::rng::stream;
use report_kg::tensor::{Tape, Tensor};
use report_kg::vkd::{
    infer_image_only, kl_gaussians, kl_var, BoundVkd, GaussianParams, SyntheticImager, VkdConfig, VkdModel,
    LOG_VAR_BOUND,
};

fn small_config() -> VkdConfig {
    VkdConfig {
        n_layers: 2,
        hidden: 4,
        latent_dim: 3,
        head_hidden: 5,
        dropout: 0.0,
        head_dropout: 0.0,
        ..VkdConfig::default()
    }
}

fn fixture() -> ReportGraph {
    let o = sample::ontology();
    let e = sample::embeddings();
    let report = Report {
        id: "fixture".into(),
        language: "en".into(),
        text: "The heart is enlarged.".into(),
        labels: None,
    };
    let g = Pipeline::new(&o, &e, AblationConfig::FULL).graph(&report).unwrap();
    assert_eq!(g.node_count(), 4);
    g
}

fn gaussian(mu: &[f64], log_var: &[f64]) -> GaussianParams {
    GaussianParams {
        mu: mu.to_vec(),
        log_var: log_var.to_vec(),
    }
}

#[test]
fn kl_closed_form_examples() {
    let p = gaussian(&[0.3, -1.2], &[0.5, -0.25]);
    assert_eq!(kl_gaussians(&p, &p).unwrap(), 0.0);
    let unit = gaussian(&[0.0], &[0.0]);
    assert!((kl_gaussians(&gaussian(&[1.0], &[0.0]), &unit).unwrap() - 0.5).abs() < 1e-15);
    let wide = kl_gaussians(&gaussian(&[0.0], &[1.0]), &unit).unwrap();
    assert!((wide - 0.5 * (std::f64::consts::E - 2.0)).abs() < 1e-12);
    assert!((wide - 0.3591).abs() < 1e-4);
    assert!(kl_gaussians(&gaussian(&[0.0, 1.0], &[0.0, 0.0]), &unit).is_err());
}

#[test]
fn tape_kl_agrees_with_closed_form() {
    let mut rng = stream(3, &[]);
    for _ in 0..50 {
        let v: Vec<Vec<f64>> = (0..4).map(|_| (0..5).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let direct = kl_gaussians(&gaussian(&v[0], &v[1]), &gaussian(&v[2], &v[3])).unwrap();
        let tape = Tape::new();
        let c = |x: &Vec<f64>| tape.constant(Tensor::row(x.clone()));
        let on_tape = kl_var(c(&v[0]), c(&v[1]), c(&v[2]), c(&v[3])).unwrap().value().item().unwrap();
        assert!((direct - on_tape).abs() < 1e-12 * direct.max(1.0));
    }
}

proptest! {
    #[test]
    fn kl_is_non_negative(
        params in (1usize..8).prop_flat_map(|d| prop::collection::vec(-30.0f64..30.0, 4 * d))
    ) {
        let d = params.len() / 4;
        let q = gaussian(&params[..d], &params[d..2 * d]);
        let p = gaussian(&params[2 * d..3 * d], &params[3 * d..]);
        let kl = kl_gaussians(&q, &p).unwrap();
        prop_assert!(kl >= 0.0 && kl.is_finite(), "kl {}", kl);
    }
}

#[test]
fn reparameterised_samples_have_the_right_moments() {
    let model = VkdModel::new(200, 6, &small_config(), &mut stream(1, &[]));
    let tape = Tape::new();
    let b = model.bind(&tape);
    let mu = [0.7, -2.0, 0.0];
    let log_var = [0.0, 1.5, -3.0];
    let (mu_v, lv_v) = (tape.constant(Tensor::row(mu.to_vec())), tape.constant(Tensor::row(log_var.to_vec())));
    let n = 100_000;
    let mut rng = stream(2, &[]);
    let mut sum = [0.0; 3];
    let mut sq = [0.0; 3];
    for _ in 0..n {
        let z = b.sample(mu_v, lv_v, &mut rng).unwrap();
        for (k, x) in z.value().data().iter().enumerate() {
            sum[k] += x;
            sq[k] += x * x;
        }
    }
    for k in 0..3 {
        let sigma = (0.5 * log_var[k]).exp();
        let mean = sum[k] / n as f64;
        let sd = (sq[k] / n as f64 - mean * mean).sqrt();
        let se_mean = sigma / (n as f64).sqrt();
        let se_sd = sigma / (2.0 * n as f64).sqrt();
        assert!((mean - mu[k]).abs() < 3.0 * se_mean, "dim {k}: mean {mean}");
        assert!((sd - sigma).abs() < 3.0 * se_sd, "dim {k}: sd {sd} vs {sigma}");
    }
}

#[test]
fn elbo_gradient_matches_finite_differences() {
    let g = fixture();
    let mut rng = stream(4, &[]);
    let image: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut labels = Labels::default();
    labels.set(2, true);
    labels.set(9, true);
    for seed in 0..3u64 {
        let model = VkdModel::new(g.feature_dim(), 6, &small_config(), &mut stream(seed, &[7]));
        let inputs: Vec<Tensor> = report_kg::params::Parameters::tensors(&model).into_iter().cloned().collect();
        for beta in [0.0, 1.0, 2.5] {
            let r = check(&inputs, 1e-5, |tape, vars| {
                let b = BoundVkd::from_vars(&model, vars);
                let mut r = stream(seed, &[8]);
                Ok(b.elbo(tape, &g, &image, &labels, beta, &mut r, true).unwrap().loss)
            })
            .unwrap();
            assert!(r.max_rel_err <= 1e-4, "seed {seed} beta {beta}: {r:?}");
        }
    }
}

#[test]
fn elbo_terms_compose() {
    let g = fixture();
    let model = VkdModel::new(g.feature_dim(), 6, &small_config(), &mut stream(5, &[]));
    let image = vec![0.5, -0.1, 0.2, 0.0, 1.0, -0.4];
    let mut labels = Labels::default();
    labels.set(0, true);
    let tape = Tape::new();
    let b = model.bind(&tape);
    let zero = b.elbo(&tape, &g, &image, &labels, 0.0, &mut stream(6, &[]), false).unwrap();
    let one = b.elbo(&tape, &g, &image, &labels, 1.0, &mut stream(6, &[]), false).unwrap();
    let (bce, kl) = (zero.bce.value().item().unwrap(), one.kl.value().item().unwrap());
    assert_eq!(zero.loss.value().item().unwrap(), bce);
    assert_eq!(one.bce.value().item().unwrap(), bce);
    assert!((one.loss.value().item().unwrap() - (bce + kl)).abs() < 1e-12);
    assert!(kl > 0.0);

    let (mu, lv) = b.prior_params(tape.constant(Tensor::row(image.clone())), &mut stream(0, &[]), false).unwrap();
    assert_eq!(kl_var(mu, lv, mu, lv).unwrap().value().item().unwrap(), 0.0);
}

#[test]
fn log_variances_are_clamped() {
    let g = fixture();
    let mut model = VkdModel::new(g.feature_dim(), 6, &small_config(), &mut stream(5, &[]));
    let out = model.prior.layers.last_mut().unwrap();
    for b in out.bias.data_mut().iter_mut() {
        *b = 1e3;
    }
    let p = model.prior(&[0.0; 6]).unwrap();
    assert!(p.log_var.iter().all(|&v| v == LOG_VAR_BOUND));
    assert!(p.mu.iter().all(|&v| v > 100.0));
}

#[test]
fn single_sample_inference_is_deterministic_and_spread_shrinks_with_samples() {
    let model = VkdModel::new(200, 6, &small_config(), &mut stream(9, &[]));
    let image = vec![0.3, 0.1, -0.6, 0.9, 0.0, -0.2];
    let a = infer_image_only(&model, &image, 1, 1).unwrap();
    let b = infer_image_only(&model, &image, 2, 1).unwrap();
    assert_eq!(a, b);

    let spread = |n_samples: usize| -> f64 {
        let preds: Vec<Vec<f64>> = (0..40)
            .map(|s| infer_image_only(&model, &image, s, n_samples).unwrap().probabilities)
            .collect();
        (0..NUM_LABELS)
            .map(|k| {
                let mean = preds.iter().map(|p| p[k]).sum::<f64>() / preds.len() as f64;
                preds.iter().map(|p| (p[k] - mean).powi(2)).sum::<f64>() / preds.len() as f64
            })
            .sum()
    };
    let (few, many) = (spread(2), spread(64));
    assert!(many < few / 8.0, "spread with 2 samples {few}, with 64 {many}");
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let model = VkdModel::new(200, 6, &small_config(), &mut stream(10, &[]));
    let mut bytes = Vec::new();
    model.to_checkpoint().write_to(&mut bytes).unwrap();
    let back = VkdModel::from_checkpoint(&report_kg::tensor::Checkpoint::read_from(&bytes[..]).unwrap()).unwrap();
    assert_eq!(back, model);
    let image = [0.1, 0.2, 0.3, -0.4, 0.5, -0.6];
    assert_eq!(infer_image_only(&back, &image, 0, 1).unwrap(), infer_image_only(&model, &image, 0, 1).unwrap());
}

#[test]
fn synthetic_images_are_deterministic_and_carry_label_signal() {
    let imager = SyntheticImager::new(64, 0.5, 1.0, 3);
    let mut y = Labels::default();
    y.set(4, true);
    assert_eq!(imager.image(&y, "a"), SyntheticImager::new(64, 0.5, 1.0, 3).image(&y, "a"));
    assert_ne!(imager.image(&y, "a"), imager.image(&y, "b"));
    let n = 4000;
    let mut mean = vec![0.0; 64];
    for i in 0..n {
        for (m, x) in mean.iter_mut().zip(imager.image(&y, &i.to_string())) {
            *m += x / n as f64;
        }
    }
    let row = imager.map.row_slice(4);
    let worst = mean.iter().zip(row).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 5.0 / (n as f64).sqrt());
}
