//! Log-densities, samplers and closed-form KL terms.
//!
//! Plain-slice functions serve evaluation code; the `*_rows` variants build the
//! same quantities on a [`Tape`](crate::autodiff::Tape) for a whole batch.

mod bernoulli;
mod gaussian;
mod target;

pub use bernoulli::{bernoulli_log_prob_rows, BernoulliProduct};
pub use gaussian::{
    diag_gaussian_log_prob_rows, kl_to_std_normal_rows, reparam_sample_rows, std_normal_log_prob,
    std_normal_log_prob_rows, DiagGaussian, LN_2PI,
};
pub use target::{
    donut_target, eight_schools_log_posterior, Donut, EightSchools, EightSchoolsPosterior,
    tape_value_and_grad, TargetDensity,
};
