//! Variational autoencoder with a diagonal Gaussian inference model and a
//! closed-form KL term, trained on the single-sample reparameterized ELBO.

use crate::autodiff::{Bound, ParamSet, Tape, Tensor, Var};
use crate::distributions::kl_to_std_normal_rows;
use crate::error::{Error, Result};
use crate::networks::{Decoder, GaussianEncoder};
use crate::training::{clip_global_norm, standard_normal, AvbConfig, StepLosses, TrainState};

#[derive(Clone, Debug)]
pub struct VaeModel {
    pub encoder: GaussianEncoder,
    pub decoder: Decoder,
}

/// Per-row `log p(x | z) - KL(q(z | x), p(z))` with `z = mean + std * eps`.
pub fn vae_elbo_rows(
    tape: &mut Tape,
    model: &VaeModel,
    theta: &Bound,
    phi: &Bound,
    x: Var,
    eps: &Tensor,
) -> Result<Var> {
    let (mean, log_std) = model.encoder.forward(tape, phi, x)?;
    let z = crate::distributions::reparam_sample_rows(tape, mean, log_std, eps)?;
    let ll = model.decoder.log_likelihood(tape, theta, x, z)?;
    let kl = kl_to_std_normal_rows(tape, mean, log_std)?;
    tape.sub(ll, kl)
}

/// Batch-mean single-sample ELBO.
pub fn vae_elbo(model: &VaeModel, theta: &ParamSet, phi: &ParamSet, batch: &Tensor, eps: &Tensor) -> Result<f64> {
    let mut tape = Tape::without_recording();
    let bt = tape.bind_frozen(theta);
    let bp = tape.bind_frozen(phi);
    let x = tape.constant(batch.clone());
    let rows = vae_elbo_rows(&mut tape, model, &bt, &bp, x, eps)?;
    let m = tape.mean(rows);
    Ok(tape.value(m).item())
}

/// One gradient step on `-ELBO` with noise drawn from `state.rng`. `psi` is unused.
pub fn vae_step(state: &mut TrainState, model: &VaeModel, batch: &Tensor, cfg: &AvbConfig) -> Result<StepLosses> {
    let eps = standard_normal(&mut state.rng, batch.rows(), model.encoder.latent_dim());
    vae_step_with_noise(state, model, batch, cfg, &eps)
}

pub fn vae_step_with_noise(
    state: &mut TrainState,
    model: &VaeModel,
    batch: &Tensor,
    cfg: &AvbConfig,
    eps: &Tensor,
) -> Result<StepLosses> {
    cfg.validate()?;
    let mut tape = Tape::new();
    let bt = tape.bind(&state.theta);
    let bp = tape.bind(&state.phi);
    let x = tape.constant(batch.clone());
    let rows = vae_elbo_rows(&mut tape, model, &bt, &bp, x, eps)?;
    let elbo = tape.mean(rows);
    let loss = tape.neg(elbo);
    let loss_gen = tape.value(loss).item();
    let g = tape.backward(loss)?;
    let mut gt = g.for_bound(&bt);
    let mut gp = g.for_bound(&bp);
    if !loss_gen.is_finite() || !gt.iter().chain(&gp).all(Tensor::is_finite) {
        return Err(Error::NonFiniteLoss {
            step: state.step,
            loss_disc: f64::NAN,
            loss_gen,
        });
    }
    if let Some(c) = cfg.clip_norm {
        for grads in [&mut gt, &mut gp] {
            if clip_global_norm(grads, c) > c {
                state.diagnostics.grads_clipped += 1;
            }
        }
    }
    let lr = cfg.generator_step_size(state.step);
    state.opt_theta.update(&mut state.theta, &gt, lr);
    state.opt_phi.update(&mut state.phi, &gp, lr);
    state.step += 1;
    Ok(StepLosses {
        step: state.step,
        loss_disc: f64::NAN,
        loss_gen,
    })
}
