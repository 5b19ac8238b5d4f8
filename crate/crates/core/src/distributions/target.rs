//! Unnormalized target densities for black-box variational inference.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use super::gaussian::{std_normal_log_prob_rows, LN_2PI};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Log-density over a latent vector, possibly unnormalized.
pub trait TargetDensity: Send + Sync {
    fn dim(&self) -> usize;

    fn name(&self) -> &str;

    /// Row-wise log-density of an `[n, dim]` batch, as `[n, 1]`.
    fn log_density(&self, tape: &mut Tape, z: Var) -> Result<Var>;

    /// Exact sampler, where one exists.
    fn sample(&self, _rng: &mut dyn rand::RngCore, _n: usize) -> Option<Vec<Vec<f64>>> {
        None
    }

    fn log_density_at(&self, z: &[f64]) -> Result<f64> {
        self.check_dim(z)?;
        let mut tape = Tape::without_recording();
        let zv = tape.constant(Tensor::row(z));
        let lp = self.log_density(&mut tape, zv)?;
        Ok(tape.value(lp).item())
    }

    /// Log-density and its gradient at a single point.
    fn value_and_grad(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        tape_value_and_grad(self, z)
    }

    fn check_dim(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "TargetDensity",
                expected: self.dim(),
                actual: z.len(),
            });
        }
        Ok(())
    }
}

/// Log-density and gradient at one point, differentiated on a fresh tape.
pub fn tape_value_and_grad<T: TargetDensity + ?Sized>(target: &T, z: &[f64]) -> Result<(f64, Vec<f64>)> {
    target.check_dim(z)?;
    let mut tape = Tape::new();
    let zv = tape.leaf(Tensor::row(z));
    let lp = target.log_density(&mut tape, zv)?;
    let total = tape.sum(lp);
    let grads = tape.backward(total)?;
    let g = grads.get(zv).expect("z is a trainable leaf").data().to_vec();
    Ok((tape.value(total).item(), g))
}

/// Gaussian ring in 2-d: `log p(z) = -(|z| - radius)^2 / (2 width^2)`.
#[derive(Clone, Debug)]
pub struct Donut {
    pub radius: f64,
    pub width: f64,
}

pub fn donut_target() -> Donut {
    Donut {
        radius: 2.0,
        width: 0.2,
    }
}

impl TargetDensity for Donut {
    fn dim(&self) -> usize {
        2
    }

    fn name(&self) -> &str {
        "donut"
    }

    fn log_density(&self, tape: &mut Tape, z: Var) -> Result<Var> {
        let sq = tape.square(z);
        let r2 = tape.sum_rows(sq)?;
        let r = tape.sqrt(r2);
        let d = tape.add_scalar(r, -self.radius);
        let d2 = tape.square(d);
        Ok(tape.scale(d2, -0.5 / (self.width * self.width)))
    }

    fn value_and_grad(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_dim(z)?;
        let r = (z[0] * z[0] + z[1] * z[1]).sqrt();
        let s2 = self.width * self.width;
        let d = r - self.radius;
        let c = -d / (s2 * r);
        Ok((-0.5 * d * d / s2, vec![c * z[0], c * z[1]]))
    }

    /// Uniform angle; radius by rejection from the radial density `r exp(-(r-R)^2 / 2s^2)`.
    fn sample(&self, rng: &mut dyn rand::RngCore, n: usize) -> Option<Vec<Vec<f64>>> {
        let r_max = self.radius + 8.0 * self.width;
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let e: f64 = rng.sample(StandardNormal);
            let r = self.radius + self.width * e;
            if r <= 0.0 || rng.random::<f64>() * r_max > r {
                continue;
            }
            let theta = rng.random::<f64>() * std::f64::consts::TAU;
            out.push(vec![r * theta.cos(), r * theta.sin()]);
        }
        Some(out)
    }
}

/// Observed effects and standard errors of the eight-schools study.
#[derive(Clone, Debug, PartialEq)]
pub struct EightSchools {
    pub y: Vec<f64>,
    pub sigma: Vec<f64>,
}

const EIGHT_SCHOOLS_TXT: &str = include_str!("../../../../data/eight_schools.txt");

impl EightSchools {
    /// The values shipped in `data/eight_schools.txt`.
    pub fn canonical() -> Self {
        Self::parse(EIGHT_SCHOOLS_TXT).expect("bundled eight-schools table is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Two whitespace-separated columns `y sigma`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut y = Vec::new();
        let mut sigma = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                context: format!("eight-schools line {}", lineno + 1),
                message,
            };
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 2 {
                return Err(err(format!("expected 2 columns, found {}", cols.len())));
            }
            let parse = |s: &str| s.parse::<f64>().map_err(|e| err(format!("{s:?}: {e}")));
            let (yi, si) = (parse(cols[0])?, parse(cols[1])?);
            if !(si > 0.0) {
                return Err(err(format!("sigma must be positive, got {si}")));
            }
            y.push(yi);
            sigma.push(si);
        }
        if y.is_empty() {
            return Err(Error::Parse {
                context: "eight-schools".into(),
                message: "no data rows".into(),
            });
        }
        Ok(Self { y, sigma })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Posterior over `(mu, tau, eta_1..eta_J)` with
/// `y_j ~ N(mu + tau eta_j, sigma_j)` and independent `N(0, 1)` priors.
#[derive(Clone, Debug)]
pub struct EightSchoolsPosterior {
    data: EightSchools,
}

impl EightSchoolsPosterior {
    pub fn new(data: EightSchools) -> Self {
        Self { data }
    }

    pub fn data(&self) -> &EightSchools {
        &self.data
    }

    /// Log posterior at a single parameter vector.
    pub fn log_posterior(&self, params: &[f64]) -> Result<f64> {
        self.log_density_at(params)
    }
}

pub fn eight_schools_log_posterior(params: &[f64], data: &EightSchools) -> Result<f64> {
    EightSchoolsPosterior::new(data.clone()).log_posterior(params)
}

impl TargetDensity for EightSchoolsPosterior {
    fn dim(&self) -> usize {
        self.data.len() + 2
    }

    fn name(&self) -> &str {
        "eight-schools"
    }

    fn log_density(&self, tape: &mut Tape, z: Var) -> Result<Var> {
        let dim = self.dim();
        let cols = tape.value(z).cols();
        if cols != dim {
            return Err(Error::DimensionMismatch {
                context: "eight-schools parameters",
                expected: dim,
                actual: cols,
            });
        }
        let j = self.data.len();
        let mu = tape.slice_cols(z, 0, 1)?;
        let tau = tape.slice_cols(z, 1, 2)?;
        let eta = tape.slice_cols(z, 2, dim)?;

        // [n, 1] -> [n, J] through a ones row
        let ones = tape.constant(Tensor::ones(&[1, j]));
        let mu_b = tape.matmul(mu, ones)?;
        let tau_b = tape.matmul(tau, ones)?;
        let effect = tape.mul(tau_b, eta)?;
        let mean = tape.add(mu_b, effect)?;

        let neg_y: Vec<f64> = self.data.y.iter().map(|v| -v).collect();
        let neg_y = tape.constant(Tensor::row(&neg_y));
        let resid = tape.add_row(mean, neg_y)?;
        let mut inv_sigma = vec![0.0; j * j];
        for (i, s) in self.data.sigma.iter().enumerate() {
            inv_sigma[i * j + i] = 1.0 / s;
        }
        let inv_sigma = tape.constant(Tensor::matrix(j, j, inv_sigma)?);
        let u = tape.matmul(resid, inv_sigma)?;
        let u2 = tape.square(u);
        let quad = tape.sum_rows(u2)?;
        let quad = tape.scale(quad, -0.5);
        let norm: f64 = self
            .data
            .sigma
            .iter()
            .map(|s| -s.ln() - 0.5 * LN_2PI)
            .sum();
        let loglik = tape.add_scalar(quad, norm);

        let prior = std_normal_log_prob_rows(tape, z)?;
        tape.add(loglik, prior)
    }

    fn value_and_grad(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_dim(z)?;
        let (mu, tau, eta) = (z[0], z[1], &z[2..]);
        let mut lp = -0.5 * z.iter().map(|v| v * v).sum::<f64>() - 0.5 * z.len() as f64 * LN_2PI;
        let mut g: Vec<f64> = z.iter().map(|v| -v).collect();
        for (j, ((&y, &s), &e)) in self.data.y.iter().zip(&self.data.sigma).zip(eta).enumerate() {
            let r = y - mu - tau * e;
            let w = r / (s * s);
            lp += -0.5 * r * w - s.ln() - 0.5 * LN_2PI;
            g[0] += w;
            g[1] += w * e;
            g[2 + j] += w * tau;
        }
        Ok((lp, g))
    }
}
