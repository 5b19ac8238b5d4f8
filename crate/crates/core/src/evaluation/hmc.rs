use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::samples::SampleSet;
use crate::distributions::TargetDensity;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmcConfig {
    pub n_samples: usize,
    /// Warm-up iterations used to adapt the step size; discarded.
    pub warmup: usize,
    pub leapfrog_steps: usize,
    pub initial_step_size: f64,
    pub target_accept: f64,
    /// Post-warm-up step sizes are drawn uniformly within this relative band.
    pub step_jitter: f64,
    /// Post-warm-up iterations per kept sample; rejected proposals repeat the
    /// state, so thinning keeps exact duplicates out of the sample.
    pub thin: usize,
    pub seed: u64,
    pub init: Option<Vec<f64>>,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self {
            n_samples: 10_000,
            warmup: 1_000,
            leapfrog_steps: 256,
            initial_step_size: 0.1,
            target_accept: 0.65,
            step_jitter: 0.1,
            thin: 1,
            seed: 0,
            init: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct HmcResult {
    pub samples: SampleSet,
    /// Mean Metropolis acceptance probability after warm-up.
    pub acceptance_rate: f64,
    pub step_size: f64,
}

fn hamiltonian(logp: f64, p: &[f64]) -> f64 {
    -logp + 0.5 * p.iter().map(|v| v * v).sum::<f64>()
}

/// Runs `steps` leapfrog steps from `(z, p)` in place; returns the final log-density and gradient.
pub fn leapfrog(
    target: &dyn TargetDensity,
    z: &mut [f64],
    p: &mut [f64],
    step_size: f64,
    steps: usize,
    mut grad: Vec<f64>,
) -> Result<(f64, Vec<f64>)> {
    let mut logp = f64::NAN;
    for _ in 0..steps {
        for (pi, g) in p.iter_mut().zip(&grad) {
            *pi += 0.5 * step_size * g;
        }
        for (zi, pi) in z.iter_mut().zip(p.iter()) {
            *zi += step_size * pi;
        }
        let (l, g) = target.value_and_grad(z)?;
        logp = l;
        grad = g;
        for (pi, g) in p.iter_mut().zip(&grad) {
            *pi += 0.5 * step_size * g;
        }
    }
    Ok((logp, grad))
}

/// Absolute change of the Hamiltonian over one trajectory.
pub fn hamiltonian_drift(target: &dyn TargetDensity, z0: &[f64], p0: &[f64], step_size: f64, steps: usize) -> Result<f64> {
    let (l0, g0) = target.value_and_grad(z0)?;
    let (mut z, mut p) = (z0.to_vec(), p0.to_vec());
    let (l1, _) = leapfrog(target, &mut z, &mut p, step_size, steps, g0)?;
    Ok((hamiltonian(l1, &p) - hamiltonian(l0, p0)).abs())
}

/// Hamiltonian Monte Carlo with a Metropolis correction. The step size is
/// adapted during warm-up by dual averaging towards `target_accept`.
pub fn hmc_sample(target: &dyn TargetDensity, cfg: &HmcConfig) -> Result<HmcResult> {
    if cfg.leapfrog_steps == 0 || cfg.thin == 0 || !(cfg.initial_step_size > 0.0) || !(0.0..1.0).contains(&cfg.target_accept) {
        return Err(Error::Config(format!("invalid HMC settings {cfg:?}")));
    }
    let dim = target.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut z = match &cfg.init {
        Some(init) => {
            target.check_dim(init)?;
            init.clone()
        }
        None => (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect(),
    };
    let (mut logp, mut grad) = target.value_and_grad(&z)?;
    if !logp.is_finite() {
        return Err(Error::Config("HMC initial point has non-finite log-density".into()));
    }

    // dual averaging constants
    let (gamma, t0, kappa) = (0.05, 10.0, 0.75);
    let mu = (10.0 * cfg.initial_step_size).ln();
    let mut log_eps = cfg.initial_step_size.ln();
    let mut log_eps_bar: f64 = if cfg.warmup == 0 { log_eps } else { 0.0 };
    let mut h_bar: f64 = 0.0;

    let mut samples = Vec::with_capacity(cfg.n_samples * dim);
    let mut accept_sum = 0.0;
    for it in 0..cfg.warmup + cfg.n_samples * cfg.thin {
        let warm = it < cfg.warmup;
        let eps = if warm {
            log_eps.exp()
        } else {
            log_eps_bar.exp() * (1.0 + cfg.step_jitter * (2.0 * rng.random::<f64>() - 1.0))
        };
        let p0: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let (mut zn, mut pn) = (z.clone(), p0.clone());
        let proposal = leapfrog(target, &mut zn, &mut pn, eps, cfg.leapfrog_steps, grad.clone());
        let (accept_prob, new_state) = match proposal {
            Ok((ln, gn)) if ln.is_finite() => {
                let log_ratio = hamiltonian(logp, &p0) - hamiltonian(ln, &pn);
                let a = if log_ratio.is_nan() { 0.0 } else { log_ratio.exp().min(1.0) };
                (a, Some((zn, ln, gn)))
            }
            Ok(_) | Err(Error::InvalidTensor(_)) => (0.0, None),
            Err(e) => return Err(e),
        };
        if let Some((zn, ln, gn)) = new_state {
            if rng.random::<f64>() < accept_prob {
                z = zn;
                logp = ln;
                grad = gn;
            }
        }
        if warm {
            let t = (it + 1) as f64;
            h_bar = (1.0 - 1.0 / (t + t0)) * h_bar + (cfg.target_accept - accept_prob) / (t + t0);
            log_eps = mu - t.sqrt() / gamma * h_bar;
            let w = t.powf(-kappa);
            log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
        } else {
            accept_sum += accept_prob;
            if (it - cfg.warmup + 1) % cfg.thin == 0 {
                samples.extend_from_slice(&z);
            }
        }
    }
    let acceptance_rate = accept_sum / (cfg.n_samples * cfg.thin).max(1) as f64;
    if !(0.2..=0.95).contains(&acceptance_rate) {
        log::warn!(
            "HMC acceptance rate {acceptance_rate:.3} on {} is outside [0.2, 0.95]; retune the step size",
            target.name()
        );
    }
    Ok(HmcResult {
        samples: SampleSet::new(format!("hmc:{}", target.name()), dim, samples)?,
        acceptance_rate,
        step_size: log_eps_bar.exp(),
    })
}

/// Independent chains with seeds `cfg.seed + i`, run on scoped threads and concatenated in chain order.
pub fn hmc_sample_chains(target: &dyn TargetDensity, cfg: &HmcConfig, chains: usize) -> Result<HmcResult> {
    let per_chain = cfg.n_samples.div_ceil(chains.max(1));
    let results: Vec<Result<HmcResult>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..chains.max(1))
            .map(|i| {
                let c = HmcConfig {
                    n_samples: per_chain,
                    seed: cfg.seed.wrapping_add(i as u64),
                    ..cfg.clone()
                };
                s.spawn(move || hmc_sample(target, &c))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("HMC chain panicked")).collect()
    });
    let mut data = Vec::new();
    let (mut acc, mut step) = (0.0, 0.0);
    let n = results.len() as f64;
    for r in results {
        let r = r?;
        data.extend_from_slice(r.samples.data());
        acc += r.acceptance_rate / n;
        step += r.step_size / n;
    }
    data.truncate(cfg.n_samples * target.dim());
    Ok(HmcResult {
        samples: SampleSet::new(format!("hmc:{}", target.name()), target.dim(), data)?,
        acceptance_rate: acc,
        step_size: step,
    })
}
