use std::fmt;
use std::sync::Arc;

use crate::autodiff::{Bound, ParamSet, Tape, Tensor, Var};
use crate::distributions::{bernoulli_log_prob_rows, std_normal_log_prob_rows, TargetDensity, LN_2PI};
use crate::error::Result;

use super::mlp::Mlp;

/// Generative model `p(x | z)` under a standard normal prior `p(z)`.
#[derive(Clone)]
pub enum Decoder {
    /// Independent Bernoulli pixels with logits `net(z)`.
    Bernoulli(Mlp),
    /// `x ~ N(net(z), stddev^2 I)` with a fixed observation noise.
    Gaussian { net: Mlp, stddev: f64 },
    /// Black-box inference against a fixed target: the "likelihood" is the
    /// target divided by the prior, so `log p(x, z)` is the target itself.
    Target(Arc<dyn TargetDensity>),
}

impl fmt::Debug for Decoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decoder::Bernoulli(net) => f.debug_tuple("Bernoulli").field(net).finish(),
            Decoder::Gaussian { net, stddev } => f
                .debug_struct("Gaussian")
                .field("net", net)
                .field("stddev", stddev)
                .finish(),
            Decoder::Target(t) => write!(f, "Target({})", t.name()),
        }
    }
}

impl Decoder {
    /// `log p(x | z)` per row, as `[n, 1]`.
    pub fn log_likelihood(&self, tape: &mut Tape, bound: &Bound, x: Var, z: Var) -> Result<Var> {
        match self {
            Decoder::Bernoulli(net) => {
                let logits = net.forward(tape, bound, z)?;
                bernoulli_log_prob_rows(tape, logits, x)
            }
            Decoder::Gaussian { net, stddev } => {
                let mean = net.forward(tape, bound, z)?;
                let d = tape.value(mean).cols() as f64;
                let r = tape.sub(x, mean)?;
                let r2 = tape.square(r);
                let s = tape.sum_rows(r2)?;
                let s = tape.scale(s, -0.5 / (stddev * stddev));
                Ok(tape.add_scalar(s, -d * (stddev.ln() + 0.5 * LN_2PI)))
            }
            Decoder::Target(t) => {
                let lt = t.log_density(tape, z)?;
                let lp = std_normal_log_prob_rows(tape, z)?;
                tape.sub(lt, lp)
            }
        }
    }

    /// `log p(x, z) = log p(x | z) + log p(z)` per row.
    pub fn log_joint(&self, tape: &mut Tape, bound: &Bound, x: Var, z: Var) -> Result<Var> {
        if let Decoder::Target(t) = self {
            return t.log_density(tape, z);
        }
        let ll = self.log_likelihood(tape, bound, x, z)?;
        let lp = std_normal_log_prob_rows(tape, z)?;
        tape.add(ll, lp)
    }

    /// Bernoulli pixel probabilities (or Gaussian means) for each latent row.
    pub fn mean_values(&self, params: &ParamSet, z: &Tensor) -> Result<Option<Tensor>> {
        match self {
            Decoder::Bernoulli(net) => Ok(Some(net.eval(params, z)?.map(crate::autodiff::sigmoid))),
            Decoder::Gaussian { net, .. } => Ok(Some(net.eval(params, z)?)),
            Decoder::Target(_) => Ok(None),
        }
    }

    /// Per-row `log p(x | z)` without gradient bookkeeping.
    pub fn log_likelihood_values(&self, params: &ParamSet, x: &Tensor, z: &Tensor) -> Result<Vec<f64>> {
        let mut tape = Tape::without_recording();
        let bound = tape.bind_frozen(params);
        let xv = tape.constant(x.clone());
        let zv = tape.constant(z.clone());
        let ll = self.log_likelihood(&mut tape, &bound, xv, zv)?;
        Ok(tape.value(ll).data().to_vec())
    }
}
