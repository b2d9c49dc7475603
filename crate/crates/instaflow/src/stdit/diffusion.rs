//! Linear-beta DDPM: noising, the training objective, ancestral sampling,
//! and autoregressive clip chaining with first-frame conditioning.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::latent::LatentTensor;
use crate::nn::{collect_grads, Grads, Graph, Tensor};

use super::model::{CondInputs, ToyStDiT};
use super::patch::patch_rearrange;
use super::text::text_embedding;

/// Beta range of the "linear" schedule, sized for short desk-scale chains
/// so the terminal signal-to-noise is low.
pub const LINEAR_BETA_START: f64 = 0.02;
pub const LINEAR_BETA_END: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(name: &str, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidConfig("noise schedule needs >= 1 step".into()));
        }
        let betas: Vec<f64> = match name {
            "linear" => (0..steps)
                .map(|i| {
                    if steps == 1 {
                        LINEAR_BETA_START
                    } else {
                        LINEAR_BETA_START
                            + (LINEAR_BETA_END - LINEAR_BETA_START) * i as f64 / (steps - 1) as f64
                    }
                })
                .collect(),
            other => {
                return Err(Error::InvalidConfig(format!("unknown noise schedule '{other}'")));
            }
        };
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(steps);
        let mut prod = 1.0;
        for a in &alphas {
            prod *= a;
            alpha_bars.push(prod);
        }
        Ok(NoiseSchedule { betas, alphas, alpha_bars })
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }
}

/// One training sample: clean latent video, its condition inputs, and the
/// prompt to embed.
#[derive(Debug, Clone)]
pub struct Sample {
    pub target: LatentTensor,
    pub conditions: CondInputs,
    pub prompt: String,
}

/// The random choices of one training step for one sample; fixing a draw
/// makes the loss a deterministic function of the parameters.
#[derive(Debug, Clone)]
pub struct NoiseDraw {
    pub timestep: usize,
    pub noise: LatentTensor,
    pub first_frame_clean: bool,
}

pub fn draw_noise(
    schedule: &NoiseSchedule,
    shape: (usize, usize, usize, usize),
    first_frame_clean_prob: f64,
    rng: &mut ChaCha8Rng,
) -> NoiseDraw {
    let (t, h, w, c) = shape;
    let timestep = rng.gen_range(0..schedule.len());
    let mut noise = LatentTensor::zeros(t, h, w, c);
    for v in noise.data.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    let first_frame_clean = rng.gen_bool(first_frame_clean_prob);
    NoiseDraw { timestep, noise, first_frame_clean }
}

/// Applies forward diffusion at `draw.timestep`, optionally keeping frame 0
/// clean. Returns the noised latent and the per-frame timesteps.
pub fn noised_input(
    schedule: &NoiseSchedule,
    z0: &LatentTensor,
    draw: &NoiseDraw,
) -> (LatentTensor, Vec<usize>) {
    let ab = schedule.alpha_bars[draw.timestep];
    let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
    let mut zt = z0.clone();
    for (o, (z, n)) in zt
        .data
        .iter_mut()
        .zip(z0.data.iter().zip(draw.noise.data.iter()))
    {
        *o = sa * z + sn * n;
    }
    let mut timesteps = vec![draw.timestep; z0.t];
    if draw.first_frame_clean && z0.t > 0 {
        zt.set_frame(0, &z0.frame(0));
        timesteps[0] = 0;
    }
    (zt, timesteps)
}

/// Loss (and optionally gradients) of one sample under a fixed draw. The
/// objective is the mean squared error between predicted and injected
/// noise over the noised positions; a clean first frame is excluded.
pub fn loss_for_draw(
    model: &ToyStDiT,
    schedule: &NoiseSchedule,
    sample: &Sample,
    draw: &NoiseDraw,
    want_grads: bool,
) -> Result<(f64, Option<Grads>)> {
    let z0 = &sample.target;
    let (zt, timesteps) = noised_input(schedule, z0, draw);
    let text = text_embedding(&sample.prompt, model.config.d_model);

    let mut g = Graph::new();
    let (leaves, pred) = model.forward(&mut g, &zt, &timesteps, &text, Some(&sample.conditions))?;

    // Targets and mask in patch layout; MSE is invariant to the spatial
    // rearrangement so the loss can stay in token space.
    let target = patch_rearrange(&draw.noise, model.config.patch)?;
    let shape = g.value(pred).shape.clone();
    let (t, s, dim) = (shape[0], shape[1], shape[2]);
    let mut mask = Tensor::zeros(&[t, s, dim]);
    let mut noised_frames = 0usize;
    for ti in 0..t {
        let frame_noised = !(draw.first_frame_clean && ti == 0);
        if frame_noised {
            noised_frames += 1;
            let base = ti * s * dim;
            for v in mask.data[base..base + s * dim].iter_mut() {
                *v = 1.0;
            }
        }
    }
    let count = (noised_frames * s * dim).max(1);

    let target_node = g.leaf(target);
    let mask_node = g.leaf(mask);
    let diff = g.sub(pred, target_node);
    let sq = g.mul(diff, diff);
    let masked = g.mul(sq, mask_node);
    let total = g.sum_all(masked);
    let loss = g.scale(total, 1.0 / count as f64);

    let loss_value = g.value(loss).item();
    if !want_grads {
        return Ok((loss_value, None));
    }
    let all = g.backward(loss);
    Ok((loss_value, Some(collect_grads(&model.params, &leaves, &all))))
}

/// One optimizer-ready training step over a batch: draws (timestep, noise,
/// clean-frame flag) per sample from `rng`, averages losses and gradients.
/// Draws happen up front on the caller's rng and sample evaluation may run
/// in parallel; the reduction order is fixed, so results are
/// bit-deterministic regardless of thread count.
pub fn train_step(
    model: &ToyStDiT,
    schedule: &NoiseSchedule,
    batch: &[Sample],
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Grads)> {
    assert!(!batch.is_empty(), "empty training batch");
    let draws: Vec<NoiseDraw> = batch
        .iter()
        .map(|sample| {
            let z = &sample.target;
            draw_noise(
                schedule,
                (z.t, z.h, z.w, z.c),
                model.config.first_frame_clean_prob,
                rng,
            )
        })
        .collect();

    use rayon::prelude::*;
    let results: Vec<(f64, Grads)> = batch
        .par_iter()
        .zip(draws.par_iter())
        .map(|(sample, draw)| {
            let (loss, grads) = loss_for_draw(model, schedule, sample, draw, true)?;
            Ok((loss, grads.expect("gradients requested")))
        })
        .collect::<Result<_>>()?;

    let mut total_loss = 0.0;
    let mut iter = results.into_iter();
    let (first_loss, mut grads) = iter.next().expect("non-empty batch");
    total_loss += first_loss;
    for (loss, g) in iter {
        total_loss += loss;
        for (a, b) in grads.iter_mut().zip(g.iter()) {
            for (x, y) in a.data.iter_mut().zip(b.data.iter()) {
                *x += y;
            }
        }
    }
    let scale = 1.0 / batch.len() as f64;
    for t in grads.iter_mut() {
        for v in t.data.iter_mut() {
            *v *= scale;
        }
    }
    Ok((total_loss * scale, grads))
}

/// DDPM ancestral sampling. Runs `steps` reverse steps starting from pure
/// noise at the end of the chain (steps >= N runs the full chain down to
/// t = 0; steps = 0 returns the initial noise). When `first_frame` is
/// given, frame 0 is clamped to it around every model call and carries
/// timestep 0.
#[allow(clippy::too_many_arguments)]
pub fn generate(
    model: &ToyStDiT,
    schedule: &NoiseSchedule,
    conditions: &CondInputs,
    prompt: &str,
    shape: (usize, usize, usize, usize),
    first_frame: Option<&LatentTensor>,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<LatentTensor> {
    let (t, h, w, c) = shape;
    let n = schedule.len();
    let text = text_embedding(prompt, model.config.d_model);

    let mut z = LatentTensor::zeros(t, h, w, c);
    for v in z.data.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    if let Some(f0) = first_frame {
        z.set_frame(0, f0);
    }

    let effective = steps.min(n);
    for step in 0..effective {
        let ti = n - 1 - step;
        let mut timesteps = vec![ti; t];
        if first_frame.is_some() {
            timesteps[0] = 0;
        }
        let eps = model.predict_noise(&z, &timesteps, &text, Some(conditions))?;

        let beta = schedule.betas[ti];
        let alpha = schedule.alphas[ti];
        let ab = schedule.alpha_bars[ti];
        let coef = beta / (1.0 - ab).sqrt();
        let inv_sqrt_alpha = 1.0 / alpha.sqrt();
        let sigma = if ti > 0 {
            let ab_prev = schedule.alpha_bars[ti - 1];
            ((1.0 - ab_prev) / (1.0 - ab) * beta).sqrt()
        } else {
            0.0
        };
        for (zi, ei) in z.data.iter_mut().zip(eps.data.iter()) {
            let mean = inv_sqrt_alpha * (*zi - coef * ei);
            let xi: f64 = if sigma > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
            *zi = mean + sigma * xi;
        }
        if let Some(f0) = first_frame {
            z.set_frame(0, f0);
        }
    }
    Ok(z)
}

/// Autoregressive chaining: each clip after the first is conditioned on the
/// previous clip's final frame, which the two clips share (1-frame
/// overlap). Returns the stitched video; a chain of k clips of t frames
/// has t + (k-1)(t-1) frames.
#[allow(clippy::too_many_arguments)]
pub fn generate_autoregressive(
    model: &ToyStDiT,
    schedule: &NoiseSchedule,
    clips: &[(CondInputs, String)],
    shape: (usize, usize, usize, usize),
    first_frame: Option<&LatentTensor>,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<LatentTensor> {
    let (t, ..) = shape;
    let mut frames: Vec<LatentTensor> = Vec::new();
    let mut carry: Option<LatentTensor> = first_frame.cloned();
    for (i, (cond, prompt)) in clips.iter().enumerate() {
        let clip = generate(model, schedule, cond, prompt, shape, carry.as_ref(), steps, rng)?;
        let skip_first = i > 0 || first_frame.is_some();
        for f in 0..t {
            if f == 0 && skip_first {
                continue; // overlap with the previous clip's last frame
            }
            frames.push(clip.frame(f));
        }
        carry = Some(clip.frame(t - 1));
    }
    LatentTensor::stack_frames(&frames)
}

/// Deterministic full training loop used by the CLI and the acceptance
/// suite; returns the per-step loss trajectory.
pub fn train_loop(
    model: &mut ToyStDiT,
    schedule: &NoiseSchedule,
    batch: &[Sample],
    steps: usize,
    lr: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = crate::nn::Adam::new(&model.params, lr);
    let mut losses = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (loss, grads) = train_step(model, schedule, batch, &mut rng)?;
        opt.step(&mut model.params, &grads);
        losses.push(loss);
    }
    Ok(losses)
}
