use crate::autodiff::{softplus, Tape, Var};
use crate::error::{Error, Result};

/// Independent Bernoulli variables parameterized by logits, one per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct BernoulliProduct {
    logits: Vec<f64>,
}

impl BernoulliProduct {
    pub fn new(logits: Vec<f64>) -> Result<Self> {
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidDistribution("non-finite logit".into()));
        }
        Ok(Self { logits })
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    /// `sum_i x_i log s(l_i) + (1 - x_i) log(1 - s(l_i))`, evaluated as
    /// `x_i l_i - softplus(l_i)` so saturated logits stay finite.
    pub fn log_prob(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.logits.len() {
            return Err(Error::DimensionMismatch {
                context: "BernoulliProduct::log_prob",
                expected: self.logits.len(),
                actual: x.len(),
            });
        }
        if let Some((index, &value)) = x.iter().enumerate().find(|(_, &v)| v != 0.0 && v != 1.0) {
            return Err(Error::NonBinary { index, value });
        }
        Ok(x.iter()
            .zip(&self.logits)
            .map(|(&xi, &l)| xi * l - softplus(l))
            .sum())
    }
}

/// Row-wise Bernoulli log-likelihood of binary data `x` under `logits`, as `[n, 1]`.
pub fn bernoulli_log_prob_rows(tape: &mut Tape, logits: Var, x: Var) -> Result<Var> {
    let xl = tape.mul(x, logits)?;
    let sp = tape.softplus(logits);
    let d = tape.sub(xl, sp)?;
    tape.sum_rows(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    #[test]
    fn uniform_bernoulli() {
        let b = BernoulliProduct::new(vec![0.0; 4]).unwrap();
        let lp = b.log_prob(&[1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((lp - 4.0 * 0.5f64.ln()).abs() < 1e-15);
        assert!((lp + 2.772_588_722_239_781).abs() < 1e-14);
        let b1 = BernoulliProduct::new(vec![0.0]).unwrap();
        assert!((b1.log_prob(&[0.0]).unwrap() - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn saturated_logits_stay_finite() {
        let b = BernoulliProduct::new(vec![50.0]).unwrap();
        let lp = b.log_prob(&[1.0]).unwrap();
        assert!(lp.is_finite() && lp.abs() < 1e-20);
        for l in [-1e3, -500.0, 500.0, 1e3] {
            let b = BernoulliProduct::new(vec![l]).unwrap();
            assert!(b.log_prob(&[0.0]).unwrap().is_finite());
            assert!(b.log_prob(&[1.0]).unwrap().is_finite());
        }
    }

    #[test]
    fn rejects_non_binary() {
        let b = BernoulliProduct::new(vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            b.log_prob(&[1.0, 0.5]),
            Err(Error::NonBinary { index: 1, .. })
        ));
        assert!(BernoulliProduct::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn tape_version_matches() {
        let logits = [2.0, -1.0, 0.3, -7.0];
        let x = [1.0, 0.0, 0.0, 1.0];
        let mut tape = Tape::new();
        let l = tape.constant(Tensor::row(&logits));
        let xv = tape.constant(Tensor::row(&x));
        let lp = bernoulli_log_prob_rows(&mut tape, l, xv).unwrap();
        let expect = BernoulliProduct::new(logits.to_vec()).unwrap().log_prob(&x).unwrap();
        assert!((tape.value(lp).item() - expect).abs() < 1e-14);
    }
}
