mod estimators;
mod hmc;
mod knn;
mod metrics;
mod modes;
mod samples;

pub use estimators::{
    aggregated_posterior_kl, aggregated_posterior_samples, dataset_loglik, elbo_via_adversary, encoder_samples,
    fit_proposal, importance_sampling_loglik, importance_sampling_loglik_with, reconstruction_error, IsOptions,
    LogLikEstimate, Proposal,
};
pub use hmc::{hamiltonian_drift, hmc_sample, hmc_sample_chains, leapfrog, HmcConfig, HmcResult};
pub use knn::{knn_kl_estimate, DEFAULT_KNN_K, DUPLICATE_JITTER, KNN_ESTIMATOR};
pub use metrics::{strip_wall_clock, MetricsRecord, WALL_CLOCK_KEY};
pub use modes::histogram_mode_count;
pub use samples::SampleSet;
