use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::{AvbConfig, Objective, UpdateOrder};
use super::losses::{discriminator_loss_fgan, discriminator_loss_gan};
use super::optimizer::{clip_global_norm, Optimizer};
use crate::autodiff::{Bound, ParamSet, Tape, Tensor, Var};
use crate::distributions::LN_2PI;
use crate::error::{Error, Result};
use crate::networks::{Adversary, AdversaryForm, Decoder, Encoder};

/// Inference model, generative model and discriminator of one AVB run.
#[derive(Clone, Debug)]
pub struct AvbModel {
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub adversary: Adversary,
}

impl AvbModel {
    pub fn latent_dim(&self) -> usize {
        self.encoder.latent_dim()
    }

    pub fn check(&self, cfg: &AvbConfig) -> Result<()> {
        if cfg.adaptive_contrast && matches!(self.encoder, Encoder::BlackBox(_)) {
            return Err(Error::Config(
                "adaptive contrast needs an encoder with tractable moments".into(),
            ));
        }
        let z_only = self.adversary.form() == AdversaryForm::ZOnly;
        if (cfg.objective == Objective::AaeZOnly) != z_only {
            return Err(Error::Config(format!(
                "objective {:?} does not match a {:?} adversary",
                cfg.objective,
                self.adversary.form()
            )));
        }
        Ok(())
    }
}

/// Counters for numerical guards that fired during training.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub fgan_clamped: u64,
    pub sigma_floored: u64,
    pub grads_clipped: u64,
}

/// Parameters `theta` (decoder), `phi` (encoder), `psi` (adversary) with their optimizers.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub theta: ParamSet,
    pub phi: ParamSet,
    pub psi: ParamSet,
    pub opt_theta: Optimizer,
    pub opt_phi: Optimizer,
    pub opt_psi: Optimizer,
    /// Generator updates applied so far.
    pub step: u64,
    pub rng: ChaCha8Rng,
    pub diagnostics: Diagnostics,
}

impl TrainState {
    pub fn new(theta: ParamSet, phi: ParamSet, psi: ParamSet, cfg: &AvbConfig) -> Self {
        Self {
            opt_theta: Optimizer::new(cfg.optimizer, &theta),
            opt_phi: Optimizer::new(cfg.optimizer, &phi),
            opt_psi: Optimizer::new(cfg.optimizer, &psi),
            theta,
            phi,
            psi,
            step: 0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            diagnostics: Diagnostics::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub step: u64,
    pub loss_disc: f64,
    /// Negative ELBO estimate of the batch under the current adversary.
    pub loss_gen: f64,
}

/// Noise consumed by one adversary or generator evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct StepNoise {
    /// Encoder noise, `[m, noise_width]`.
    pub eps: Tensor,
    /// Contrast samples, `[m, latent_dim]`: prior draws, or standard normals under adaptive contrast.
    pub contrast: Tensor,
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::matrix(rows, cols, data).expect("positive extents")
}

impl StepNoise {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, model: &AvbModel, rows: usize) -> Self {
        let eps = standard_normal(rng, rows, model.encoder.noise_width());
        let contrast = standard_normal(rng, rows, model.latent_dim());
        Self { eps, contrast }
    }
}

/// How the generator objective treats the adversary output.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveMode {
    pub objective: Objective,
    pub adaptive_contrast: bool,
    pub sigma_floor: f64,
}

impl From<&AvbConfig> for ObjectiveMode {
    fn from(cfg: &AvbConfig) -> Self {
        Self {
            objective: cfg.objective,
            adaptive_contrast: cfg.adaptive_contrast,
            sigma_floor: cfg.sigma_floor,
        }
    }
}

/// Per-row generator quantities built on one tape.
#[derive(Clone, Debug)]
pub struct ObjectiveRows {
    /// Encoder sample `z`.
    pub z: Var,
    /// What the adversary sees: `z`, or its normalization under adaptive contrast.
    pub z_adv: Var,
    /// Adversary logits on `(x, z_adv)`.
    pub logits: Var,
    /// Differentiable objective for `theta` and `phi`, `[m, 1]`.
    pub objective: Var,
    /// ELBO estimate per row: `objective` plus terms constant in the parameters.
    pub elbo: Var,
    pub sigma_floored: usize,
}

/// Builds the generator objective for a batch.
///
/// Without adaptive contrast the objective is `-T(x, z) + log p(x | z)`; with it,
/// `-T(x, zbar) + |zbar|^2 / 2 + log p(x, z)` where `zbar = (z - mu) / sigma` and
/// `mu`, `sigma` carry no gradient. `critic` maps `(x, z_adv)` to logits.
#[allow(clippy::too_many_arguments)]
pub fn generator_objective_rows(
    tape: &mut Tape,
    model: &AvbModel,
    theta: &Bound,
    phi: &Bound,
    x: Var,
    eps: &Tensor,
    mode: ObjectiveMode,
    critic: &mut dyn FnMut(&mut Tape, Var, Var) -> Result<Var>,
) -> Result<ObjectiveRows> {
    let s = model.encoder.sample(tape, phi, x, eps)?;
    if !mode.adaptive_contrast {
        let logits = critic(tape, x, s.z)?;
        let ll = model.decoder.log_likelihood(tape, theta, x, s.z)?;
        let t = if mode.objective == Objective::FganKl {
            tape.add_scalar(logits, -1.0)
        } else {
            logits
        };
        let objective = tape.sub(ll, t)?;
        return Ok(ObjectiveRows {
            z: s.z,
            z_adv: s.z,
            logits,
            objective,
            elbo: objective,
            sigma_floored: 0,
        });
    }

    let (mean, mut stddev) = match (&s.moments, &s.gaussian) {
        (Some((m, sd)), _) => (m.clone(), sd.clone()),
        (None, Some((m, ls))) => (tape.value(*m).clone(), tape.value(*ls).map(f64::exp)),
        (None, None) => {
            return Err(Error::Config(
                "adaptive contrast needs an encoder with tractable moments".into(),
            ))
        }
    };
    let mut floored = 0;
    for v in stddev.data_mut() {
        if !(*v >= mode.sigma_floor) {
            *v = mode.sigma_floor;
            floored += 1;
        }
    }
    let (n, d) = (stddev.rows(), stddev.cols());
    let mu = tape.constant(mean);
    let inv_sigma = tape.constant(stddev.map(|v| 1.0 / v));
    let centered = tape.sub(s.z, mu)?;
    let zbar = tape.mul(centered, inv_sigma)?;
    let logits = critic(tape, x, zbar)?;
    let t = if mode.objective == Objective::FganKl {
        tape.add_scalar(logits, -1.0)
    } else {
        logits
    };
    let sq = tape.square(zbar);
    let half = tape.sum_rows(sq)?;
    let half = tape.scale(half, 0.5);
    let lj = model.decoder.log_joint(tape, theta, x, s.z)?;
    let a = tape.sub(lj, t)?;
    let objective = tape.add(a, half)?;
    let log_norm: Vec<f64> = (0..n)
        .map(|r| stddev.row_slice(r).iter().map(|v| v.ln()).sum::<f64>() + 0.5 * d as f64 * LN_2PI)
        .collect();
    let log_norm = tape.constant(Tensor::matrix(n, 1, log_norm)?);
    let elbo = tape.add(objective, log_norm)?;
    Ok(ObjectiveRows {
        z: s.z,
        z_adv: zbar,
        logits,
        objective,
        elbo,
        sigma_floored: floored,
    })
}

struct Evaluated {
    loss_disc: f64,
    loss_gen: f64,
    g_psi: Vec<Tensor>,
    g_gen: Option<(Vec<Tensor>, Vec<Tensor>)>,
    fgan_clamped: usize,
    sigma_floored: usize,
}

fn evaluate(
    state: &TrainState,
    model: &AvbModel,
    batch: &Tensor,
    noise: &StepNoise,
    cfg: &AvbConfig,
    want_gen: bool,
) -> Result<Evaluated> {
    let mut tape = Tape::new();
    let bt = tape.bind(&state.theta);
    let bp = tape.bind(&state.phi);
    let bs = tape.bind(&state.psi);
    let x = tape.constant(batch.clone());
    let adv = &model.adversary;
    let rows = generator_objective_rows(
        &mut tape,
        model,
        &bt,
        &bp,
        x,
        &noise.eps,
        ObjectiveMode::from(cfg),
        &mut |tape, x, z| adv.forward(tape, &bs, x, z),
    )?;
    let contrast = tape.constant(noise.contrast.clone());
    let logits_contrast = adv.forward(&mut tape, &bs, x, contrast)?;
    let (disc, fgan_clamped) = match cfg.objective {
        Objective::Gan | Objective::AaeZOnly => (discriminator_loss_gan(&mut tape, rows.logits, logits_contrast)?, 0),
        Objective::FganKl => discriminator_loss_fgan(&mut tape, rows.logits, logits_contrast)?,
    };
    let neg_obj = tape.mean(rows.objective);
    let neg_obj = tape.neg(neg_obj);
    let elbo = tape.mean(rows.elbo);

    let g_psi = tape.backward(disc)?.for_bound(&bs);
    let g_gen = if want_gen {
        let g = tape.backward(neg_obj)?;
        Some((g.for_bound(&bt), g.for_bound(&bp)))
    } else {
        None
    };
    Ok(Evaluated {
        loss_disc: tape.value(disc).item(),
        loss_gen: -tape.value(elbo).item(),
        g_psi,
        g_gen,
        fgan_clamped,
        sigma_floored: rows.sigma_floored,
    })
}

fn all_finite(groups: &[&[Tensor]]) -> bool {
    groups.iter().all(|g| g.iter().all(Tensor::is_finite))
}

fn apply(params: &mut ParamSet, opt: &mut Optimizer, mut grads: Vec<Tensor>, lr: f64, cfg: &AvbConfig, diag: &mut Diagnostics) {
    if let Some(c) = cfg.clip_norm {
        if clip_global_norm(&mut grads, c) > c {
            diag.grads_clipped += 1;
        }
    }
    opt.update(params, &grads, lr);
}

/// Number of noise draws one call to [`avb_step_with_noise`] consumes.
pub fn noise_draws_per_step(cfg: &AvbConfig) -> usize {
    match cfg.update_order {
        UpdateOrder::Simultaneous => cfg.adversary_steps,
        UpdateOrder::Alternating => cfg.adversary_steps + 1,
    }
}

/// One generator update preceded by the configured adversary updates, with
/// noise drawn from `state.rng`. Dispatches on `cfg.adaptive_contrast`.
pub fn avb_step(state: &mut TrainState, model: &AvbModel, batch: &Tensor, cfg: &AvbConfig) -> Result<StepLosses> {
    let noises: Vec<StepNoise> = (0..noise_draws_per_step(cfg))
        .map(|_| StepNoise::draw(&mut state.rng, model, batch.rows()))
        .collect();
    avb_step_with_noise(state, model, batch, cfg, &noises)
}

/// Adaptive-contrast step; the contrast samples are standard normals.
pub fn avb_ac_step(state: &mut TrainState, model: &AvbModel, batch: &Tensor, cfg: &AvbConfig) -> Result<StepLosses> {
    let cfg = AvbConfig {
        adaptive_contrast: true,
        ..cfg.clone()
    };
    avb_step(state, model, batch, &cfg)
}

/// [`avb_step`] with explicit noise, one [`StepNoise`] per evaluation.
///
/// Simultaneous order: `k - 1` adversary-only updates, then adversary and
/// generator updated from the same samples. Alternating order: `k` adversary
/// updates, then a generator update on fresh samples.
pub fn avb_step_with_noise(
    state: &mut TrainState,
    model: &AvbModel,
    batch: &Tensor,
    cfg: &AvbConfig,
    noises: &[StepNoise],
) -> Result<StepLosses> {
    cfg.validate()?;
    model.check(cfg)?;
    if noises.len() != noise_draws_per_step(cfg) {
        return Err(Error::DimensionMismatch {
            context: "noise draws per step",
            expected: noise_draws_per_step(cfg),
            actual: noises.len(),
        });
    }
    let lr_adv = cfg.adversary_step_size(state.step);
    let lr_gen = cfg.generator_step_size(state.step);
    let k = cfg.adversary_steps;
    let adversary_only = match cfg.update_order {
        UpdateOrder::Simultaneous => k - 1,
        UpdateOrder::Alternating => k,
    };
    let mut loss_disc = f64::NAN;
    for noise in &noises[..adversary_only] {
        let ev = evaluate(state, model, batch, noise, cfg, false)?;
        if !ev.loss_disc.is_finite() || !all_finite(&[&ev.g_psi]) {
            return Err(Error::NonFiniteLoss {
                step: state.step,
                loss_disc: ev.loss_disc,
                loss_gen: ev.loss_gen,
            });
        }
        loss_disc = ev.loss_disc;
        state.diagnostics.fgan_clamped += ev.fgan_clamped as u64;
        apply(&mut state.psi, &mut state.opt_psi, ev.g_psi, lr_adv, cfg, &mut state.diagnostics);
    }

    let ev = evaluate(state, model, batch, &noises[adversary_only], cfg, true)?;
    let (g_theta, g_phi) = ev.g_gen.expect("generator gradients requested");
    if !ev.loss_disc.is_finite() || !ev.loss_gen.is_finite() || !all_finite(&[&ev.g_psi, &g_theta, &g_phi]) {
        return Err(Error::NonFiniteLoss {
            step: state.step,
            loss_disc: ev.loss_disc,
            loss_gen: ev.loss_gen,
        });
    }
    state.diagnostics.sigma_floored += ev.sigma_floored as u64;
    if cfg.update_order == UpdateOrder::Simultaneous {
        loss_disc = ev.loss_disc;
        state.diagnostics.fgan_clamped += ev.fgan_clamped as u64;
        apply(&mut state.psi, &mut state.opt_psi, ev.g_psi, lr_adv, cfg, &mut state.diagnostics);
    }
    apply(&mut state.theta, &mut state.opt_theta, g_theta, lr_gen, cfg, &mut state.diagnostics);
    apply(&mut state.phi, &mut state.opt_phi, g_phi, lr_gen, cfg, &mut state.diagnostics);
    state.step += 1;
    Ok(StepLosses {
        step: state.step,
        loss_disc,
        loss_gen: ev.loss_gen,
    })
}

/// Trains only the adversary to separate `sample_q` (label 1) from `sample_p`
/// (label 0), with `x` a constant ones column. Returns the final loss.
#[allow(clippy::too_many_arguments)]
pub fn fit_adversary(
    adversary: &Adversary,
    psi: &mut ParamSet,
    objective: Objective,
    sample_q: &mut dyn FnMut(&mut ChaCha8Rng, usize) -> Tensor,
    sample_p: &mut dyn FnMut(&mut ChaCha8Rng, usize) -> Tensor,
    steps: usize,
    batch_size: usize,
    cfg: &AvbConfig,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer, psi);
    let x = Tensor::ones(&[batch_size, 1]);
    let mut last = f64::NAN;
    let mut diag = Diagnostics::default();
    for step in 0..steps {
        let zq = sample_q(&mut rng, batch_size);
        let zp = sample_p(&mut rng, batch_size);
        let mut tape = Tape::new();
        let b = tape.bind(psi);
        let xv = tape.constant(x.clone());
        let q = tape.constant(zq);
        let p = tape.constant(zp);
        let tq = adversary.forward(&mut tape, &b, xv, q)?;
        let tp = adversary.forward(&mut tape, &b, xv, p)?;
        let loss = match objective {
            Objective::FganKl => discriminator_loss_fgan(&mut tape, tq, tp)?.0,
            _ => discriminator_loss_gan(&mut tape, tq, tp)?,
        };
        last = tape.value(loss).item();
        if !last.is_finite() {
            return Err(Error::NonFiniteLoss {
                step: step as u64,
                loss_disc: last,
                loss_gen: f64::NAN,
            });
        }
        let g = tape.backward(loss)?.for_bound(&b);
        apply(psi, &mut opt, g, cfg.adversary_step_size(step as u64), cfg, &mut diag);
    }
    Ok(last)
}
