//! Adversarial training of an implicit inference model.
//!
//! Each step updates the decoder (`theta`), encoder (`phi`) and adversary
//! (`psi`) from one minibatch. The adversary learns `log q(z|x) - log p(z)`,
//! which stands in for the intractable density of the encoder in the ELBO.

mod config;
mod log;
mod losses;
mod optimizer;
mod step;

pub use config::{AvbConfig, Objective, UpdateOrder};
pub use log::StepLogger;
pub use losses::{
    discriminator_loss_fgan, discriminator_loss_fgan_values, discriminator_loss_gan, discriminator_loss_gan_values,
    FGAN_LOGIT_CAP,
};
pub use optimizer::{clip_global_norm, optimizer_update, Optimizer, OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use step::{
    avb_ac_step, avb_step, avb_step_with_noise, fit_adversary, generator_objective_rows, noise_draws_per_step,
    standard_normal, AvbModel, Diagnostics, ObjectiveMode, ObjectiveRows, StepLosses, StepNoise, TrainState,
};
