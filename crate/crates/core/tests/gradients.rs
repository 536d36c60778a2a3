mod support;

use ocscreen_core::network::{Model, ModelConfig};
use ocscreen_core::tensor::{self, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REL_TOL: f64 = 1e-3;
// f32 backprop cannot resolve differences below this when the surrounding
// terms are O(0.1); gradients smaller than that are compared absolutely.
const ABS_FLOOR: f64 = 1e-7;

fn random_input(rng: &mut ChaCha8Rng, side: usize) -> Tensor {
    let data = (0..3 * side * side).map(|_| rng.random_range(0.0..1.0)).collect();
    Tensor::from_vec(&[3, side, side], data).unwrap()
}

struct Report {
    checked: usize,
    worst_rel: f64,
    failures: Vec<String>,
}

/// Compares `Model::backward` against central differences of the f64
/// reference network for every parameter of `cfg`.
fn check_model(cfg: ModelConfig, input_seed: u64) -> Report {
    let model = Model::build(cfg.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(input_seed);
    let input = random_input(&mut rng, cfg.input_size);
    let target = rng.random_range(0..3);

    let (logits, cache) = model.forward(&input).unwrap();
    let probs = tensor::softmax(&logits);
    let (_, g_logits) = tensor::cross_entropy(&probs, target).unwrap();
    let grads = model.backward(&cache, &g_logits).unwrap();

    let mut params: Vec<Vec<f64>> = model
        .parameters()
        .iter()
        .map(|t| t.data().iter().map(|&v| v as f64).collect())
        .collect();
    let x: Vec<f64> = input.data().iter().map(|&v| v as f64).collect();
    let names: Vec<String> = cfg.parameter_shapes().into_iter().map(|(n, _)| n).collect();

    let eps = 1e-6;
    let mut report = Report {
        checked: 0,
        worst_rel: 0.0,
        failures: vec![],
    };
    for p in 0..params.len() {
        for i in 0..params[p].len() {
            let orig = params[p][i];
            params[p][i] = orig + eps;
            let up = support::model_loss(&cfg, &params, &x, target);
            params[p][i] = orig - eps;
            let down = support::model_loss(&cfg, &params, &x, target);
            params[p][i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = grads.tensors[p].data()[i] as f64;
            let diff = (numeric - analytic).abs();
            let scale = numeric.abs().max(analytic.abs());
            report.checked += 1;
            if diff <= ABS_FLOOR {
                continue;
            }
            let rel = diff / scale;
            report.worst_rel = report.worst_rel.max(rel);
            if rel > REL_TOL {
                report
                    .failures
                    .push(format!("{}[{i}]: analytic {analytic:e} numeric {numeric:e}", names[p]));
            }
        }
    }
    report
}

#[test]
fn tiny_model_gradients_match_finite_differences() {
    for seed in 0..4 {
        let r = check_model(ModelConfig::tiny().with_seed(seed), 100 + seed);
        assert_eq!(r.checked, ModelConfig::tiny().parameter_count());
        assert!(r.failures.is_empty(), "seed {seed}: {:#?}", r.failures);
    }
}

#[test]
fn two_stage_model_gradients_match_finite_differences() {
    let cfg = ModelConfig {
        input_size: 8,
        conv_stages: vec![
            ocscreen_core::network::ConvStage::new(4, 3),
            ocscreen_core::network::ConvStage::new(4, 5),
        ],
        hidden_units: 5,
        num_classes: 3,
        seed: 9,
    };
    let r = check_model(cfg, 7);
    assert!(r.failures.is_empty(), "{:#?}", r.failures);
}

#[test]
fn model_forward_matches_reference_composition() {
    let cfg = ModelConfig::tiny();
    let model = Model::build(cfg.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let input = random_input(&mut rng, 8);
        let params: Vec<Vec<f64>> = model
            .parameters()
            .iter()
            .map(|t| t.data().iter().map(|&v| v as f64).collect())
            .collect();
        let x: Vec<f64> = input.data().iter().map(|&v| v as f64).collect();
        let expected = support::model_logits(&cfg, &params, &x);
        let got = model.logits(&input).unwrap();
        for (g, e) in got.data().iter().zip(&expected) {
            assert!((*g as f64 - e).abs() <= 1e-5 * e.abs().max(1.0), "{g} vs {e}");
        }
    }
}

#[test]
fn zero_upstream_gradient_gives_zero_parameter_gradients() {
    let model = Model::build(ModelConfig::tiny()).unwrap();
    let input = random_input(&mut ChaCha8Rng::seed_from_u64(1), 8);
    let (_, cache) = model.forward(&input).unwrap();
    let grads = model.backward(&cache, &Tensor::zeros(&[3]).unwrap()).unwrap();
    assert!(grads.tensors.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
    let again = model.backward(&cache, &Tensor::zeros(&[3]).unwrap()).unwrap();
    assert_eq!(grads, again);
}
