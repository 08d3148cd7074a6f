//! Adversarial fitting of the render model against unlabeled underwater
//! images.
//!
//! The discriminator minimizes `−[mean log D(x) + mean log(1 − D(G))]` over
//! real images `x` and rendered images `G`; the generator (the ten physical
//! parameters) minimizes `−mean log D(G)`. Generator gradients flow from the
//! discriminator's input gradient through the closed-form render
//! derivatives and the constraint-preserving reparameterization.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::discriminator::{sigmoid, softplus, Discriminator, INPUT_HEIGHT, INPUT_WIDTH};
use crate::error::{Error, Result};
use crate::image::{DepthMap, LinearImage};
use crate::optim::{Adam, AdamConfig};
use crate::params::{RenderModel, NUM_PARAMS};
use crate::physics::{render, render_gradients};
use crate::reparam::Theta;

/// In-air RGB-D pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image: LinearImage,
    pub depth: DepthMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Discriminator step size.
    pub learning_rate: f64,
    /// Step size on the reparameterized generator coordinates.
    pub gen_learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Fraction of both datasets held out for the accuracy measurement.
    pub holdout_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            learning_rate: 2e-4,
            gen_learning_rate: 3e-3,
            epochs: 10,
            seed: 0,
            adam: AdamConfig::default(),
            holdout_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::invalid("batch_size", "must be >= 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate", "must be a finite value >= 0"));
        }
        if !(self.gen_learning_rate >= 0.0 && self.gen_learning_rate.is_finite()) {
            return Err(Error::invalid(
                "gen_learning_rate",
                "must be a finite value >= 0",
            ));
        }
        if self.epochs < 1 {
            return Err(Error::invalid("epochs", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::invalid("holdout_fraction", "must lie in [0,1)"));
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::invalid(
                "adam",
                "decay rates must lie in [0,1) and eps must be > 0",
            ));
        }
        Ok(())
    }
}

/// Generator parameters in reparameterized form, with optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorState {
    pub theta: Theta,
    base: RenderModel,
    adam: Adam,
}

impl GeneratorState {
    pub fn new(init: &RenderModel) -> Result<Self> {
        Ok(Self {
            theta: Theta::from_model(init)?,
            base: *init,
            adam: Adam::new(NUM_PARAMS),
        })
    }

    pub fn model(&self) -> Result<RenderModel> {
        self.theta.to_model(&self.base)
    }
}

fn ensure_train_shape(img: &LinearImage, what: &'static str) -> Result<()> {
    if img.width() != INPUT_WIDTH || img.height() != INPUT_HEIGHT {
        return Err(Error::DimensionMismatch {
            what,
            expected_w: INPUT_WIDTH,
            expected_h: INPUT_HEIGHT,
            actual_w: img.width(),
            actual_h: img.height(),
        });
    }
    Ok(())
}

/// Element-wise sum of per-item gradients in item order, so the result does
/// not depend on the thread schedule.
fn ordered_sum(parts: Vec<Vec<f64>>, n: usize) -> Vec<f64> {
    let mut acc = vec![0.0; n];
    for p in parts {
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
    }
    acc
}

/// Discriminator loss and weight gradient for one batch, without stepping.
pub fn disc_loss_and_grad(
    reals: &[LinearImage],
    fakes: &[LinearImage],
    d: &Discriminator,
) -> Result<(f64, Vec<f64>)> {
    if reals.is_empty() || fakes.is_empty() {
        return Err(Error::Empty("discriminator batch".into()));
    }
    for r in reals {
        ensure_train_shape(r, "real batch image")?;
    }
    for f in fakes {
        ensure_train_shape(f, "synthetic batch image")?;
    }
    let nr = reals.len() as f64;
    let nf = fakes.len() as f64;
    let labeled: Vec<(&LinearImage, bool)> = reals
        .iter()
        .map(|r| (r, true))
        .chain(fakes.iter().map(|f| (f, false)))
        .collect();
    let per: Vec<(f64, Vec<f64>)> = labeled
        .par_iter()
        .map(|&(img, real)| {
            let mut loss = 0.0;
            let (_, g, _) = d.backward(
                img,
                |z| {
                    if real {
                        loss = softplus(-z) / nr;
                        (sigmoid(z) - 1.0) / nr
                    } else {
                        loss = softplus(z) / nf;
                        sigmoid(z) / nf
                    }
                },
                false,
            );
            (loss, g)
        })
        .collect();
    let loss = per.iter().map(|(l, _)| l).sum::<f64>();
    let grad = ordered_sum(per.into_iter().map(|(_, g)| g).collect(), d.params().len());
    Ok((loss, grad))
}

/// One optimizer step on the discriminator. Returns the pre-step loss.
pub fn disc_update(
    reals: &[LinearImage],
    fakes: &[LinearImage],
    d: &mut Discriminator,
    cfg: &TrainConfig,
) -> Result<f64> {
    let (loss, grad) = disc_loss_and_grad(reals, fakes, d)?;
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Divergence {
            stage: "discriminator update",
            detail: format!("loss {loss} after {} steps", d.step_count()),
        });
    }
    let mut adam = std::mem::replace(&mut d.adam, Adam::new(0));
    adam.step(d.params_mut(), &grad, cfg.learning_rate, &cfg.adam);
    d.adam = adam;
    d.check_finite()?;
    Ok(loss)
}

/// Generator loss `−mean log D(render)` and its gradient with respect to the
/// natural parameters.
pub fn gen_loss_and_grad(
    model: &RenderModel,
    scenes: &[Scene],
    d: &Discriminator,
    seeds: &[u64],
) -> Result<(f64, [f64; NUM_PARAMS])> {
    if scenes.is_empty() {
        return Err(Error::Empty("generator batch".into()));
    }
    let n = scenes.len() as f64;
    let per: Vec<Result<(f64, [f64; NUM_PARAMS])>> = scenes
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(s, &seed)| {
            ensure_train_shape(&s.image, "scene image")?;
            let fake = render(&s.image, &s.depth, model, seed)?;
            let jac = render_gradients(&s.image, &s.depth, model)?;
            let mut loss = 0.0;
            let (_, _, dx) = d.backward(
                &fake,
                |z| {
                    loss = softplus(-z) / n;
                    (sigmoid(z) - 1.0) / n
                },
                true,
            );
            let dx = dx.expect("input gradient requested");
            let g: [f64; NUM_PARAMS] =
                std::array::from_fn(|j| jac.d[j].iter().zip(&dx).map(|(a, b)| a * b).sum());
            Ok((loss, g))
        })
        .collect();
    let mut loss = 0.0;
    let mut grad = [0.0; NUM_PARAMS];
    for r in per {
        let (l, g) = r?;
        loss += l;
        for j in 0..NUM_PARAMS {
            grad[j] += g[j];
        }
    }
    Ok((loss, grad))
}

/// One optimizer step on the generator parameters, ascending
/// `mean log D(render)`. Returns the pre-step generator loss.
pub fn gen_update(
    state: &mut GeneratorState,
    scenes: &[Scene],
    d: &Discriminator,
    cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<f64> {
    let model = state.model()?;
    let (loss, g_nat) = gen_loss_and_grad(&model, scenes, d, seeds)?;
    let g = state.theta.pullback(&g_nat);
    if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            stage: "generator update",
            detail: format!("loss {loss}, gradient {g:?}"),
        });
    }
    let mut theta = state.theta.0;
    state.adam.step(&mut theta, &g, cfg.gen_learning_rate, &cfg.adam);
    let next = Theta(theta);
    let m = next.to_model(&state.base)?;
    debug_assert!(m.validate().is_ok());
    state.theta = next;
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub disc_loss: f64,
    pub gen_loss: f64,
    /// Held-out classification accuracy at threshold 0.5.
    pub disc_accuracy: f64,
    pub disc_steps: usize,
    pub gen_steps: usize,
    /// Natural-domain parameters at the end of the epoch.
    pub params: [f64; NUM_PARAMS],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    /// One header row, then one row per epoch.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,disc_loss,gen_loss,disc_accuracy,disc_steps,gen_steps");
        for name in crate::params::PARAM_NAMES {
            s.push(',');
            s.push_str(name);
        }
        s.push('\n');
        for e in &self.epochs {
            s.push_str(&format!(
                "{},{},{},{},{},{}",
                e.epoch, e.disc_loss, e.gen_loss, e.disc_accuracy, e.disc_steps, e.gen_steps
            ));
            for p in e.params {
                s.push_str(&format!(",{p}"));
            }
            s.push('\n');
        }
        s
    }
}

pub struct TrainOutcome {
    pub model: RenderModel,
    pub discriminator: Discriminator,
    pub report: TrainReport,
}

/// Splits off the trailing `fraction` of a dataset for evaluation, keeping at
/// least one training item.
fn holdout_len(n: usize, fraction: f64) -> usize {
    if n < 2 {
        return 0;
    }
    ((n as f64 * fraction).round() as usize).min(n - 1)
}

/// Fraction of held-out items classified correctly (real > 0.5, synthetic < 0.5).
pub fn heldout_accuracy(
    d: &Discriminator,
    reals: &[LinearImage],
    fakes: &[LinearImage],
) -> Result<f64> {
    let total = reals.len() + fakes.len();
    if total == 0 {
        return Err(Error::Empty("held-out set".into()));
    }
    let mut correct = 0usize;
    for r in reals {
        if crate::discriminator::disc_forward(r, d)? > 0.5 {
            correct += 1;
        }
    }
    for f in fakes {
        if crate::discriminator::disc_forward(f, d)? < 0.5 {
            correct += 1;
        }
    }
    Ok(correct as f64 / total as f64)
}

/// Alternating discriminator/generator training over `epochs` passes of the
/// real set. Each epoch runs `⌊N_train / batch_size⌋` steps of each kind;
/// real images are drawn without replacement and scenes cycle through their
/// own shuffled order. Fully deterministic for a given seed and dataset
/// order.
pub fn train(
    cfg: &TrainConfig,
    reals: &[LinearImage],
    scenes: &[Scene],
    init: &RenderModel,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if reals.is_empty() {
        return Err(Error::Empty("real image set".into()));
    }
    if scenes.is_empty() {
        return Err(Error::Empty("in-air scene set".into()));
    }
    for r in reals {
        ensure_train_shape(r, "real image")?;
    }
    for s in scenes {
        ensure_train_shape(&s.image, "scene image")?;
        s.image.ensure_dims(&s.depth, "scene image vs depth")?;
    }
    let hr = holdout_len(reals.len(), cfg.holdout_fraction);
    let hs = holdout_len(scenes.len(), cfg.holdout_fraction);
    let (train_reals, held_reals) = reals.split_at(reals.len() - hr);
    let (train_scenes, held_scenes) = scenes.split_at(scenes.len() - hs);
    let steps = train_reals.len() / cfg.batch_size;
    if steps == 0 {
        return Err(Error::invalid(
            "batch_size",
            format!(
                "batch of {} exceeds the {} training images",
                cfg.batch_size,
                train_reals.len()
            ),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut disc = Discriminator::new(rng.gen());
    let mut gen = GeneratorState::new(init)?;
    let mut report = TrainReport::default();
    let mut real_order: Vec<usize> = (0..train_reals.len()).collect();
    let mut scene_order: Vec<usize> = (0..train_scenes.len()).collect();
    let mut scene_cursor = 0usize;

    for epoch in 0..cfg.epochs {
        real_order.shuffle(&mut rng);
        let (mut d_sum, mut g_sum) = (0.0, 0.0);
        for step in 0..steps {
            let batch_reals: Vec<LinearImage> = real_order
                [step * cfg.batch_size..(step + 1) * cfg.batch_size]
                .iter()
                .map(|&i| train_reals[i].clone())
                .collect();
            let mut batch_scenes = Vec::with_capacity(cfg.batch_size);
            for _ in 0..cfg.batch_size {
                if scene_cursor == 0 {
                    scene_order.shuffle(&mut rng);
                }
                batch_scenes.push(train_scenes[scene_order[scene_cursor]].clone());
                scene_cursor = (scene_cursor + 1) % train_scenes.len();
            }
            let seeds: Vec<u64> = (0..cfg.batch_size).map(|_| rng.gen()).collect();

            let model = gen.model()?;
            let fakes = batch_scenes
                .par_iter()
                .zip(seeds.par_iter())
                .map(|(s, &seed)| render(&s.image, &s.depth, &model, seed))
                .collect::<Result<Vec<_>>>()?;
            d_sum += disc_update(&batch_reals, &fakes, &mut disc, cfg)?;
            g_sum += gen_update(&mut gen, &batch_scenes, &disc, cfg, &seeds)?;
            if cfg!(debug_assertions) {
                gen.model()?.validate()?;
            }
        }

        let model = gen.model()?;
        let (eval_reals, eval_scenes) = if held_reals.is_empty() || held_scenes.is_empty() {
            (train_reals, train_scenes)
        } else {
            (held_reals, held_scenes)
        };
        let eval_fakes = eval_scenes
            .iter()
            .enumerate()
            .map(|(i, s)| render(&s.image, &s.depth, &model, cfg.seed ^ (i as u64)))
            .collect::<Result<Vec<_>>>()?;
        let acc = heldout_accuracy(&disc, eval_reals, &eval_fakes)?;
        report.epochs.push(EpochStats {
            epoch: epoch + 1,
            disc_loss: d_sum / steps as f64,
            gen_loss: g_sum / steps as f64,
            disc_accuracy: acc,
            disc_steps: steps,
            gen_steps: steps,
            params: model.natural(),
        });
    }
    Ok(TrainOutcome {
        model: gen.model()?,
        discriminator: disc,
        report,
    })
}
