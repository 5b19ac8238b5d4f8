use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::knn::{knn_kl_estimate, DEFAULT_KNN_K};
use super::samples::SampleSet;
use crate::autodiff::{ParamSet, Tape, Tensor};
use crate::distributions::{std_normal_log_prob, DiagGaussian};
use crate::error::{Error, Result};
use crate::networks::{Decoder, Encoder};
use crate::training::{generator_objective_rows, standard_normal, AvbModel, ObjectiveMode};

/// Rows per forward pass when evaluating large sample batches.
const CHUNK: usize = 2048;

fn repeat_row(x: &[f64], n: usize) -> Tensor {
    let mut data = Vec::with_capacity(n * x.len());
    for _ in 0..n {
        data.extend_from_slice(x);
    }
    Tensor::matrix(n, x.len(), data).expect("positive extents")
}

fn chunks(n: usize) -> impl Iterator<Item = usize> {
    (0..n.div_ceil(CHUNK)).map(move |c| CHUNK.min(n - c * CHUNK))
}

/// `n` encoder draws for each row of `x`, stacked row-major by input row.
pub fn encoder_samples(encoder: &Encoder, phi: &ParamSet, x: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let d = encoder.latent_dim();
    let mut out = Vec::with_capacity(n * d);
    for rows in chunks(n) {
        // moment encoders estimate basis statistics per batch and need two rows
        let rows_eval = rows.max(2);
        let eps = standard_normal(rng, rows_eval, encoder.noise_width());
        let z = encoder.sample_values(phi, &repeat_row(x, rows_eval), &eps)?;
        out.extend_from_slice(&z.data()[..rows * d]);
    }
    Tensor::matrix(n, d, out)
}

/// Monte Carlo average of the adversary-based ELBO estimate over `batch` with
/// `n_samples` noise draws per row. Exact only when the adversary is optimal.
pub fn elbo_via_adversary(
    model: &AvbModel,
    theta: &ParamSet,
    phi: &ParamSet,
    psi: &ParamSet,
    batch: &Tensor,
    n_samples: usize,
    mode: ObjectiveMode,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut total = 0.0;
    for _ in 0..n_samples {
        let mut tape = Tape::without_recording();
        let (bt, bp, bs) = (tape.bind_frozen(theta), tape.bind_frozen(phi), tape.bind_frozen(psi));
        let x = tape.constant(batch.clone());
        let eps = standard_normal(rng, batch.rows(), model.encoder.noise_width());
        let rows = generator_objective_rows(&mut tape, model, &bt, &bp, x, &eps, mode, &mut |t, x, z| {
            model.adversary.forward(t, &bs, x, z)
        })?;
        let m = tape.mean(rows.elbo);
        total += tape.value(m).item();
    }
    Ok(total / n_samples as f64)
}

/// A log-likelihood estimate with its delta-method standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLikEstimate {
    pub value: f64,
    pub se: f64,
}

/// Importance distribution for one data point.
#[derive(Clone, Debug, PartialEq)]
pub enum Proposal {
    Prior,
    /// `(1 - prior_weight) N(mean, stddev) + prior_weight N(0, I)`.
    Gaussian { q: DiagGaussian, prior_weight: f64 },
}

impl Proposal {
    fn sample(&self, rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        let eps: Vec<f64> = standard_normal(rng, 1, d).into_data();
        match self {
            Proposal::Prior => eps,
            Proposal::Gaussian { q, prior_weight } => {
                if rng.random::<f64>() < *prior_weight {
                    eps
                } else {
                    q.reparam_sample(&eps).expect("dimension checked at construction")
                }
            }
        }
    }

    fn log_prob(&self, z: &[f64]) -> Result<f64> {
        let lp = std_normal_log_prob(z);
        match self {
            Proposal::Prior => Ok(lp),
            Proposal::Gaussian { q, prior_weight } => {
                let lq = q.log_prob(z)?;
                if *prior_weight == 0.0 {
                    return Ok(lq);
                }
                let (a, b) = ((1.0 - prior_weight).ln() + lq, prior_weight.ln() + lp);
                let m = a.max(b);
                Ok(m + ((a - m).exp() + (b - m).exp()).ln())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsOptions {
    pub n_samples: usize,
    /// Encoder draws used to moment-match the proposal of a black-box encoder.
    pub n_fit: usize,
    /// Multiplies the matched standard deviations.
    pub stddev_scale: f64,
    /// Mixture weight of the prior in the proposal.
    pub prior_weight: f64,
}

impl Default for IsOptions {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            n_fit: 1000,
            stddev_scale: 1.0,
            prior_weight: 0.0,
        }
    }
}

/// Diagonal Gaussian matched to `q(z | x)`: exact for Gaussian encoders,
/// closed-form moments for moment encoders, sample moments otherwise.
pub fn fit_proposal(
    encoder: &Encoder,
    phi: &ParamSet,
    x: &[f64],
    opts: &IsOptions,
    rng: &mut ChaCha8Rng,
) -> Result<Proposal> {
    let (mean, stddev) = match encoder {
        Encoder::Gaussian(e) => {
            let mut tape = Tape::without_recording();
            let b = tape.bind_frozen(phi);
            let xv = tape.constant(Tensor::row(x));
            let (m, ls) = e.forward(&mut tape, &b, xv)?;
            (tape.value(m).data().to_vec(), tape.value(ls).data().iter().map(|v| v.exp()).collect())
        }
        Encoder::Moment(e) => {
            let eps = standard_normal(rng, opts.n_fit.max(2), e.noise_width());
            let moments = e.basis_moments(phi, &eps)?;
            let mut tape = Tape::without_recording();
            let b = tape.bind_frozen(phi);
            let xv = tape.constant(repeat_row(x, 2));
            let s = e.forward_with(&mut tape, &b, xv, &standard_normal(rng, 2, e.noise_width()), &moments)?;
            (s.mean.row_slice(0).to_vec(), s.stddev.row_slice(0).to_vec())
        }
        Encoder::BlackBox(_) => {
            if opts.n_fit < 2 {
                return Err(Error::NotEnoughSamples("proposal fit needs at least 2 draws".into()));
            }
            let z = encoder_samples(encoder, phi, x, opts.n_fit, rng)?;
            let s = SampleSet::from_tensor("fit", &z)?;
            (s.mean(), s.variance().into_iter().map(f64::sqrt).collect())
        }
    };
    let stddev: Vec<f64> = stddev.into_iter().map(|s| s * opts.stddev_scale).collect();
    if let Some(s) = stddev.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::DegenerateProposal(format!("proposal stddev {s}")));
    }
    if !(0.0..=1.0).contains(&opts.prior_weight) {
        return Err(Error::Config(format!("prior_weight {} outside [0, 1]", opts.prior_weight)));
    }
    Ok(Proposal::Gaussian {
        q: DiagGaussian::new(mean, stddev).map_err(|e| Error::DegenerateProposal(e.to_string()))?,
        prior_weight: opts.prior_weight,
    })
}

/// `log mean_i p(x | z_i) p(z_i) / r(z_i)` with `z_i ~ r`, for one data point.
pub fn importance_sampling_loglik_with(
    decoder: &Decoder,
    theta: &ParamSet,
    x: &[f64],
    latent_dim: usize,
    proposal: &Proposal,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<LogLikEstimate> {
    if n == 0 {
        return Err(Error::NotEnoughSamples("importance sampling needs n >= 1".into()));
    }
    let mut log_w = Vec::with_capacity(n);
    for rows in chunks(n) {
        let zs: Vec<Vec<f64>> = (0..rows).map(|_| proposal.sample(rng, latent_dim)).collect();
        let z = Tensor::from_rows(&zs)?;
        let ll = decoder.log_likelihood_values(theta, &repeat_row(x, rows), &z)?;
        for (zi, l) in zs.iter().zip(ll) {
            log_w.push(l + std_normal_log_prob(zi) - proposal.log_prob(zi)?);
        }
    }
    let m = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::DegenerateProposal(format!("largest log-weight is {m}")));
    }
    let w: Vec<f64> = log_w.iter().map(|l| (l - m).exp()).collect();
    let nf = n as f64;
    let mean = w.iter().sum::<f64>() / nf;
    let var = if n > 1 {
        w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0)
    } else {
        0.0
    };
    Ok(LogLikEstimate {
        value: m + mean.ln(),
        se: (var / nf).sqrt() / mean,
    })
}

pub fn importance_sampling_loglik(
    encoder: &Encoder,
    phi: &ParamSet,
    decoder: &Decoder,
    theta: &ParamSet,
    x: &[f64],
    opts: &IsOptions,
    rng: &mut ChaCha8Rng,
) -> Result<LogLikEstimate> {
    let proposal = fit_proposal(encoder, phi, x, opts, rng)?;
    importance_sampling_loglik_with(decoder, theta, x, encoder.latent_dim(), &proposal, opts.n_samples, rng)
}

/// Mean per-example log-likelihood over the rows of `data`, with the SE of that mean.
pub fn dataset_loglik(
    encoder: &Encoder,
    phi: &ParamSet,
    decoder: &Decoder,
    theta: &ParamSet,
    data: &Tensor,
    opts: &IsOptions,
    rng: &mut ChaCha8Rng,
) -> Result<LogLikEstimate> {
    let n = data.rows() as f64;
    let (mut value, mut var) = (0.0, 0.0);
    for r in 0..data.rows() {
        let e = importance_sampling_loglik(encoder, phi, decoder, theta, data.row_slice(r), opts, rng)?;
        value += e.value / n;
        var += e.se * e.se / (n * n);
    }
    Ok(LogLikEstimate { value, se: var.sqrt() })
}

/// Mean over `batch` of `-log p(x | z)` with one encoder draw per example.
pub fn reconstruction_error(
    encoder: &Encoder,
    phi: &ParamSet,
    decoder: &Decoder,
    theta: &ParamSet,
    batch: &Tensor,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let eps = standard_normal(rng, batch.rows(), encoder.noise_width());
    let z = encoder.sample_values(phi, batch, &eps)?;
    let ll = decoder.log_likelihood_values(theta, batch, &z)?;
    Ok(-ll.iter().sum::<f64>() / ll.len() as f64)
}

/// Draws `n` codes from the aggregated posterior (data rows chosen uniformly)
/// and `n` prior draws.
pub fn aggregated_posterior_samples(
    encoder: &Encoder,
    phi: &ParamSet,
    data: &Tensor,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(SampleSet, SampleSet)> {
    let d = encoder.latent_dim();
    let mut zq = Vec::with_capacity(n * d);
    for rows in chunks(n) {
        let rows_eval = rows.max(2);
        let picked: Vec<Vec<f64>> = (0..rows_eval)
            .map(|_| data.row_slice(rng.random_range(0..data.rows())).to_vec())
            .collect();
        let eps = standard_normal(rng, rows_eval, encoder.noise_width());
        let z = encoder.sample_values(phi, &Tensor::from_rows(&picked)?, &eps)?;
        zq.extend_from_slice(&z.data()[..rows * d]);
    }
    let q = SampleSet::new("aggregated-posterior", d, zq)?;
    let p = SampleSet::from_tensor("prior", &standard_normal(rng, n, d))?;
    Ok((q, p))
}

/// k-NN estimate of `KL(q(z), p(z))` for the aggregated posterior `q(z)`.
pub fn aggregated_posterior_kl(
    encoder: &Encoder,
    phi: &ParamSet,
    data: &Tensor,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let (q, p) = aggregated_posterior_samples(encoder, phi, data, n, rng)?;
    knn_kl_estimate(&q, &p, DEFAULT_KNN_K)
}
