mod common;

use aquarender_core::discriminator::{disc_forward, Discriminator};
use aquarender_core::gan::{gen_loss_and_grad, gen_update, train, GeneratorState, Scene, TrainConfig};
use aquarender_core::physics::render;
use aquarender_core::synth::{reference_model, textured_scene};
use aquarender_core::{LinearImage, RenderModel};
use common::random_model;

/// A discriminator whose logit is `4·L(red) − 2`, where `L` is a fixed
/// positive-weight average of the red channel: every activation stays
/// non-negative, so the network is exactly linear in red.
fn linear_red_discriminator() -> Discriminator {
    let mut d = Discriminator::zeros();
    for layer in 0..4 {
        for ky in 0..5 {
            for kx in 0..5 {
                let i = d.conv_weight_index(layer, 0, ky, kx, 0);
                d.params_mut()[i] = 1.0 / 25.0;
            }
        }
    }
    for y in 0..3 {
        for x in 0..4 {
            let i = d.dense_weight_index(y, x, 0);
            d.params_mut()[i] = 4.0 / 12.0;
        }
    }
    let b = d.dense_bias_index();
    d.params_mut()[b] = -2.0;
    d
}

fn scenes(n: u64, offset: u64) -> Vec<Scene> {
    (0..n).map(|i| textured_scene(64, 48, 0.5, 9.0, offset + i)).collect()
}

fn mean_log_d(model: &RenderModel, scenes: &[Scene], d: &Discriminator) -> f64 {
    scenes
        .iter()
        .map(|s| disc_forward(&render(&s.image, &s.depth, model, 0).unwrap(), d).unwrap().ln())
        .sum::<f64>()
        / scenes.len() as f64
}

#[test]
fn linear_red_discriminator_is_linear_in_red() {
    let d = linear_red_discriminator();
    let a = LinearImage::filled(64, 48, [0.2, 0.9, 0.1]).unwrap();
    let b = LinearImage::filled(64, 48, [0.6, 0.1, 0.7]).unwrap();
    let mid = LinearImage::filled(64, 48, [0.4, 0.3, 0.5]).unwrap();
    let (la, lb, lm) = (d.logit(&a).unwrap(), d.logit(&b).unwrap(), d.logit(&mid).unwrap());
    assert!((lm - 0.5 * (la + lb)).abs() < 1e-12);
    assert!(lb > la);
}

#[test]
fn generator_step_increases_log_d_under_known_discriminator() {
    let d = linear_red_discriminator();
    let batch = scenes(4, 50);
    let init = reference_model(10.0);
    let mut state = GeneratorState::new(&init).unwrap();
    let cfg = TrainConfig {
        gen_learning_rate: 1e-3,
        ..Default::default()
    };
    let before = mean_log_d(&init, &batch, &d);
    let seeds = [0; 4];
    let (_, g) = gen_loss_and_grad(&init, &batch, &d, &seeds).unwrap();
    // More attenuation darkens red, which this discriminator dislikes.
    assert!(g[0] > 0.0);
    gen_update(&mut state, &batch, &d, &cfg, &seeds).unwrap();
    let after_model = state.model().unwrap();
    assert!(after_model.water.eta[0] < init.water.eta[0]);
    let after = mean_log_d(&after_model, &batch, &d);
    assert!(after > before, "log D {before} -> {after}");
}

#[test]
fn constraints_hold_after_many_random_steps() {
    let batch = scenes(1, 90);
    let mut state = GeneratorState::new(&random_model(3)).unwrap();
    let cfg = TrainConfig {
        gen_learning_rate: 0.2,
        ..Default::default()
    };
    for step in 0..1000u64 {
        let d = Discriminator::new(step);
        gen_update(&mut state, &batch, &d, &cfg, &[step]).unwrap();
        let m = state.model().unwrap();
        let (w, c) = (m.water, m.camera);
        assert!(w.eta.iter().all(|&e| e > 0.0), "step {step}");
        assert!(w.beta.iter().all(|&b| (0.0..=1.0).contains(&b)));
        assert!(c.c >= 0.0 && c.a > 0.0 && c.k > 0.0);
        assert!(4.0 * c.b * c.b - 12.0 * c.a * c.c < 0.0, "step {step}: {c:?}");
    }
}

#[test]
fn training_is_deterministic_for_a_seed() {
    let truth = reference_model(10.0);
    let reals: Vec<LinearImage> = scenes(20, 300)
        .iter()
        .enumerate()
        .map(|(i, s)| render(&s.image, &s.depth, &truth, i as u64).unwrap())
        .collect();
    let sim = scenes(20, 400);
    let init = aquarender_core::fit::default_init(10.0);
    let cfg = TrainConfig {
        batch_size: 6,
        epochs: 2,
        seed: 11,
        ..Default::default()
    };
    let a = train(&cfg, &reals, &sim, &init).unwrap();
    let b = train(&cfg, &reals, &sim, &init).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(a.report.to_csv(), b.report.to_csv());
    assert_eq!(a.model, b.model);
    assert_eq!(a.discriminator.params(), b.discriminator.params());
    let c = train(&TrainConfig { seed: 12, ..cfg }, &reals, &sim, &init).unwrap();
    assert_ne!(a.report, c.report);
}
