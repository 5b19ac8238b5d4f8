use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// `sum_i [-ln(2 pi)/2 - z_i^2/2]`.
pub fn std_normal_log_prob(z: &[f64]) -> f64 {
    z.iter().map(|&v| -0.5 * LN_2PI - 0.5 * v * v).sum()
}

/// Gaussian with diagonal covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagGaussian {
    mean: Vec<f64>,
    stddev: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, stddev: Vec<f64>) -> Result<Self> {
        if mean.len() != stddev.len() {
            return Err(Error::DimensionMismatch {
                context: "DiagGaussian mean/stddev",
                expected: mean.len(),
                actual: stddev.len(),
            });
        }
        if let Some(s) = stddev.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidDistribution(format!(
                "stddev components must be positive and finite, got {s}"
            )));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidDistribution("non-finite mean".into()));
        }
        Ok(Self { mean, stddev })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            stddev: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn stddev(&self) -> &[f64] {
        &self.stddev
    }

    fn check_dim(&self, context: &'static str, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.dim(),
                actual: n,
            });
        }
        Ok(())
    }

    pub fn log_prob(&self, z: &[f64]) -> Result<f64> {
        self.check_dim("DiagGaussian::log_prob", z.len())?;
        Ok(z.iter()
            .zip(&self.mean)
            .zip(&self.stddev)
            .map(|((&z, &m), &s)| {
                let u = (z - m) / s;
                -0.5 * LN_2PI - s.ln() - 0.5 * u * u
            })
            .sum())
    }

    /// `mean + stddev * eps`.
    pub fn reparam_sample(&self, eps: &[f64]) -> Result<Vec<f64>> {
        self.check_dim("DiagGaussian::reparam_sample", eps.len())?;
        Ok(eps
            .iter()
            .zip(&self.mean)
            .zip(&self.stddev)
            .map(|((&e, &m), &s)| m + s * e)
            .collect())
    }

    /// `KL(self, N(0, I)) = sum_i (mu_i^2 + s_i^2 - 1 - 2 ln s_i) / 2`.
    pub fn kl_to_std_normal(&self) -> f64 {
        self.mean
            .iter()
            .zip(&self.stddev)
            .map(|(&m, &s)| 0.5 * (m * m + s * s - 1.0 - 2.0 * s.ln()))
            .sum()
    }

    /// `KL(self, other)` in closed form.
    pub fn kl_to(&self, other: &DiagGaussian) -> Result<f64> {
        other.check_dim("DiagGaussian::kl_to", self.dim())?;
        Ok(self
            .mean
            .iter()
            .zip(&self.stddev)
            .zip(other.mean.iter().zip(&other.stddev))
            .map(|((&m, &s), (&mr, &sr))| {
                let d = m - mr;
                (sr / s).ln() + (s * s + d * d) / (2.0 * sr * sr) - 0.5
            })
            .sum())
    }

    /// Distribution of `(z - mean_r) / stddev_r` for `z ~ self`.
    pub fn normalized_by(&self, r: &DiagGaussian) -> Result<DiagGaussian> {
        r.check_dim("DiagGaussian::normalized_by", self.dim())?;
        let mean = self
            .mean
            .iter()
            .zip(r.mean.iter().zip(&r.stddev))
            .map(|(&m, (&mr, &sr))| (m - mr) / sr)
            .collect();
        let stddev = self
            .stddev
            .iter()
            .zip(&r.stddev)
            .map(|(&s, &sr)| s / sr)
            .collect();
        DiagGaussian::new(mean, stddev)
    }
}

/// Row-wise standard-normal log-density of an `[n, d]` batch, as `[n, 1]`.
pub fn std_normal_log_prob_rows(tape: &mut Tape, z: Var) -> Result<Var> {
    let d = tape.value(z).cols() as f64;
    let sq = tape.square(z);
    let s = tape.sum_rows(sq)?;
    let s = tape.scale(s, -0.5);
    Ok(tape.add_scalar(s, -0.5 * d * LN_2PI))
}

/// Row-wise diagonal-Gaussian log-density with `log_std` parameterization, as `[n, 1]`.
pub fn diag_gaussian_log_prob_rows(tape: &mut Tape, z: Var, mean: Var, log_std: Var) -> Result<Var> {
    let d = tape.value(z).cols() as f64;
    let diff = tape.sub(z, mean)?;
    let neg_log_std = tape.neg(log_std);
    let inv_std = tape.exp(neg_log_std);
    let u = tape.mul(diff, inv_std)?;
    let u2 = tape.square(u);
    let quad = tape.sum_rows(u2)?;
    let quad = tape.scale(quad, -0.5);
    let log_det = tape.sum_rows(log_std)?;
    let lp = tape.sub(quad, log_det)?;
    Ok(tape.add_scalar(lp, -0.5 * d * LN_2PI))
}

/// `mean + exp(log_std) * eps`, differentiable in `mean` and `log_std`.
pub fn reparam_sample_rows(tape: &mut Tape, mean: Var, log_std: Var, eps: &Tensor) -> Result<Var> {
    let std = tape.exp(log_std);
    let e = tape.constant(eps.clone());
    let scaled = tape.mul(std, e)?;
    tape.add(mean, scaled)
}

/// Row-wise `KL(N(mean, exp(log_std)^2), N(0, I))`, as `[n, 1]`.
pub fn kl_to_std_normal_rows(tape: &mut Tape, mean: Var, log_std: Var) -> Result<Var> {
    let m2 = tape.square(mean);
    let two_ls = tape.scale(log_std, 2.0);
    let var = tape.exp(two_ls);
    let a = tape.add(m2, var)?;
    let a = tape.sub(a, two_ls)?;
    let a = tape.add_scalar(a, -1.0);
    let s = tape.sum_rows(a)?;
    Ok(tape.scale(s, 0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn std_normal_examples() {
        assert!(close(std_normal_log_prob(&[0.0]), -HALF_LN_2PI, 1e-15));
        assert!(close(std_normal_log_prob(&[0.0, 0.0]), -1.837_877_066_409_345, 1e-15));
        assert!(close(std_normal_log_prob(&[1.0]), -1.418_938_533_204_672_7, 1e-15));
    }

    #[test]
    fn diag_gaussian_log_prob_examples() {
        let g = DiagGaussian::new(vec![0.0], vec![1.0]).unwrap();
        assert!(close(g.log_prob(&[0.0]).unwrap(), -HALF_LN_2PI, 1e-15));
        let g = DiagGaussian::new(vec![1.0], vec![2.0]).unwrap();
        assert!(close(g.log_prob(&[1.0]).unwrap(), -HALF_LN_2PI - 2f64.ln(), 1e-15));
        let g = DiagGaussian::standard(2);
        assert!(close(g.log_prob(&[3.0, -3.0]).unwrap(), -2.0 * HALF_LN_2PI - 9.0, 1e-13));
        assert!(matches!(g.log_prob(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn construction_validates() {
        assert!(DiagGaussian::new(vec![0.0], vec![0.0]).is_err());
        assert!(DiagGaussian::new(vec![0.0], vec![-1.0]).is_err());
        assert!(DiagGaussian::new(vec![0.0, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn reparam_examples() {
        let g = DiagGaussian::new(vec![1.0, -2.0], vec![0.5, 3.0]).unwrap();
        assert_eq!(g.reparam_sample(&[0.0, 0.0]).unwrap(), vec![1.0, -2.0]);
        let s = DiagGaussian::standard(2);
        assert_eq!(s.reparam_sample(&[0.3, -0.7]).unwrap(), vec![0.3, -0.7]);
        let g = DiagGaussian::new(vec![1.0], vec![2.0]).unwrap();
        assert_eq!(g.reparam_sample(&[-1.0]).unwrap(), vec![-1.0]);
    }

    #[test]
    fn kl_examples() {
        assert_eq!(DiagGaussian::standard(3).kl_to_std_normal(), 0.0);
        let g = DiagGaussian::new(vec![1.0], vec![1.0]).unwrap();
        assert!(close(g.kl_to_std_normal(), 0.5, 1e-15));
        let g = DiagGaussian::new(vec![0.0], vec![2.0]).unwrap();
        assert!(close(g.kl_to_std_normal(), 0.806_852_819_440_054_7, 1e-14));
    }

    #[test]
    fn kl_is_nonnegative_and_zero_only_at_standard() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let d = rng.random_range(1..5);
            let mean: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let stddev: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..4.0)).collect();
            let kl = DiagGaussian::new(mean, stddev).unwrap().kl_to_std_normal();
            assert!(kl > 0.0, "{kl}");
        }
    }

    #[test]
    fn monte_carlo_kl_agrees_with_closed_form() {
        let q = DiagGaussian::new(vec![0.7, -0.4], vec![0.6, 1.5]).unwrap();
        let p = DiagGaussian::standard(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..n {
            let eps: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
            let z = q.reparam_sample(&eps).unwrap();
            let d = q.log_prob(&z).unwrap() - p.log_prob(&z).unwrap();
            sum += d;
            sum_sq += d * d;
        }
        let mean = sum / n as f64;
        let se = ((sum_sq / n as f64 - mean * mean) / n as f64).sqrt();
        let exact = q.kl_to_std_normal();
        assert!((mean - exact).abs() < 3.0 * se, "mc={mean} exact={exact} se={se}");
    }

    #[test]
    fn tape_versions_match_scalar_versions() {
        let mean = [0.3, -1.1];
        let log_std = [-0.2, 0.4];
        let z = [0.9, 0.1];
        let g = DiagGaussian::new(mean.to_vec(), log_std.iter().map(|l: &f64| l.exp()).collect()).unwrap();
        let mut tape = Tape::new();
        let (mv, lv, zv) = (
            tape.constant(Tensor::row(&mean)),
            tape.constant(Tensor::row(&log_std)),
            tape.constant(Tensor::row(&z)),
        );
        let lp = diag_gaussian_log_prob_rows(&mut tape, zv, mv, lv).unwrap();
        assert!(close(tape.value(lp).item(), g.log_prob(&z).unwrap(), 1e-14));
        let kl = kl_to_std_normal_rows(&mut tape, mv, lv).unwrap();
        assert!(close(tape.value(kl).item(), g.kl_to_std_normal(), 1e-14));
        let sn = std_normal_log_prob_rows(&mut tape, zv).unwrap();
        assert!(close(tape.value(sn).item(), std_normal_log_prob(&z), 1e-14));
        let s = reparam_sample_rows(&mut tape, mv, lv, &Tensor::row(&[1.0, -1.0])).unwrap();
        let expect = g.reparam_sample(&[1.0, -1.0]).unwrap();
        for (a, b) in tape.value(s).data().iter().zip(expect) {
            assert!(close(*a, b, 1e-15));
        }
    }

    #[test]
    fn reparameterization_invariance_of_kl() {
        let q = DiagGaussian::new(vec![0.5, -2.0, 3.0], vec![0.3, 1.7, 2.2]).unwrap();
        let r = DiagGaussian::new(vec![0.1, -1.0, 2.5], vec![0.5, 1.0, 3.0]).unwrap();
        let direct = q.kl_to(&r).unwrap();
        let normalized = q.normalized_by(&r).unwrap().kl_to_std_normal();
        assert!((direct - normalized).abs() <= 1e-12 * direct.abs().max(1.0));
        assert!(close(q.kl_to(&DiagGaussian::standard(3)).unwrap(), q.kl_to_std_normal(), 1e-13));
    }
}
