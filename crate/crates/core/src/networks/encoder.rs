use rand::Rng;

use super::mlp::{Activation, Init, Mlp, MlpSpec};
use crate::autodiff::{Bound, ParamSet, Tape, Tensor, Var};
use crate::distributions::reparam_sample_rows;
use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -10.0;
pub const LOG_STD_MAX: f64 = 10.0;

/// Implicit inference model: one network over `concat(x, eps)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlackBoxEncoder {
    net: Mlp,
    data_dim: usize,
    noise_dim: usize,
}

impl BlackBoxEncoder {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        data_dim: usize,
        noise_dim: usize,
        latent_dim: usize,
        hidden: &[usize],
        act: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut widths = vec![data_dim + noise_dim];
        widths.extend_from_slice(hidden);
        widths.push(latent_dim);
        let spec = MlpSpec {
            widths,
            hidden: act,
            output: Activation::Identity,
        };
        let net = Mlp::new(params, "enc", spec, Init::GlorotUniform, rng)?;
        Ok(Self {
            net,
            data_dim,
            noise_dim,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.net.spec().output_dim()
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var, eps: &Tensor) -> Result<Var> {
        let e = tape.constant(eps.clone());
        let input = tape.concat(x, e)?;
        self.net.forward(tape, bound, input)
    }
}

/// Per-basis noise statistics `E[v_i]`, `Var[v_i]`, each `[m][d]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisMoments {
    pub mean: Vec<Vec<f64>>,
    pub var: Vec<Vec<f64>>,
}

/// Output of [`MomentEncoder::forward`]: a sample plus its closed-form moments.
#[derive(Clone, Debug)]
pub struct MomentSample {
    pub z: Var,
    /// `[n, d]`, carries no gradient.
    pub mean: Tensor,
    /// `[n, d]`, carries no gradient.
    pub stddev: Tensor,
}

/// `z_k = sum_i v_{i,k}(eps_i) a_{i,k}(x)` with basis networks `f_i` and a
/// coefficient network `g`, so mean and variance of `z` given `x` follow from
/// the moments of the `v_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentEncoder {
    bases: Vec<Mlp>,
    coeff: Mlp,
    noise_dim: usize,
    latent_dim: usize,
}

impl MomentEncoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        data_dim: usize,
        latent_dim: usize,
        num_bases: usize,
        noise_dim: usize,
        basis_hidden: &[usize],
        coeff_hidden: &[usize],
        act: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if num_bases < 2 {
            return Err(Error::Config(format!(
                "moment encoder needs at least 2 basis vectors, got {num_bases}"
            )));
        }
        let widths = |input: usize, hidden: &[usize], output: usize| {
            let mut w = vec![input];
            w.extend_from_slice(hidden);
            w.push(output);
            MlpSpec {
                widths: w,
                hidden: act,
                output: Activation::Identity,
            }
        };
        let bases = (0..num_bases)
            .map(|i| {
                Mlp::new(
                    params,
                    &format!("enc.basis{i}"),
                    widths(noise_dim, basis_hidden, latent_dim),
                    Init::GlorotUniform,
                    rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let coeff = Mlp::new(
            params,
            "enc.coeff",
            widths(data_dim, coeff_hidden, num_bases * latent_dim),
            Init::GlorotUniform,
            rng,
        )?;
        Ok(Self {
            bases,
            coeff,
            noise_dim,
            latent_dim,
        })
    }

    pub fn num_bases(&self) -> usize {
        self.bases.len()
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn data_dim(&self) -> usize {
        self.coeff.spec().input_dim()
    }

    pub fn bases(&self) -> &[Mlp] {
        &self.bases
    }

    pub fn coeff_net(&self) -> &Mlp {
        &self.coeff
    }

    /// Columns of `eps` per example: one block of `noise_dim` per basis.
    pub fn noise_width(&self) -> usize {
        self.bases.len() * self.noise_dim
    }

    fn check_noise(&self, eps: &Tensor) -> Result<()> {
        if eps.cols() != self.noise_width() {
            return Err(Error::DimensionMismatch {
                context: "moment encoder noise (num_bases * noise_dim)",
                expected: self.noise_width(),
                actual: eps.cols(),
            });
        }
        Ok(())
    }

    fn basis_outputs(&self, tape: &mut Tape, bound: &Bound, eps: &Tensor) -> Result<Vec<Var>> {
        self.check_noise(eps)?;
        let e = tape.constant(eps.clone());
        (0..self.bases.len())
            .map(|i| {
                let block = tape.slice_cols(e, i * self.noise_dim, (i + 1) * self.noise_dim)?;
                self.bases[i].forward(tape, bound, block)
            })
            .collect()
    }

    /// Sample mean and unbiased variance of each basis output over the rows of `eps`.
    pub fn basis_moments(&self, params: &ParamSet, eps: &Tensor) -> Result<BasisMoments> {
        let mut tape = Tape::without_recording();
        let bound = tape.bind_frozen(params);
        let v = self.basis_outputs(&mut tape, &bound, eps)?;
        let v: Vec<Tensor> = v.into_iter().map(|v| tape.value(v).clone()).collect();
        moments_of(&v)
    }

    /// Draws `z` for each row of `x` and computes its moments, estimating the
    /// basis statistics from this same batch of noise.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var, eps: &Tensor) -> Result<MomentSample> {
        let v = self.basis_outputs(tape, bound, eps)?;
        let values: Vec<Tensor> = v.iter().map(|&v| tape.value(v).clone()).collect();
        let moments = moments_of(&values)?;
        self.combine(tape, bound, x, &v, &moments)
    }

    /// As [`forward`](Self::forward) but with externally estimated basis statistics.
    pub fn forward_with(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        x: Var,
        eps: &Tensor,
        moments: &BasisMoments,
    ) -> Result<MomentSample> {
        let v = self.basis_outputs(tape, bound, eps)?;
        self.combine(tape, bound, x, &v, moments)
    }

    /// Coefficients `a(x)` as `[n, m * d]`, basis-major.
    pub fn coefficients(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        self.coeff.forward(tape, bound, x)
    }

    fn combine(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        x: Var,
        v: &[Var],
        moments: &BasisMoments,
    ) -> Result<MomentSample> {
        let d = self.latent_dim;
        if moments.mean.len() != self.bases.len() {
            return Err(Error::DimensionMismatch {
                context: "basis moments",
                expected: self.bases.len(),
                actual: moments.mean.len(),
            });
        }
        if moments.var.iter().flatten().all(|&s| s == 0.0) {
            return Err(Error::DegenerateMoments(
                "every basis output has zero variance".into(),
            ));
        }
        let a = self.coefficients(tape, bound, x)?;
        let n = tape.value(a).rows();
        if tape.value(v[0]).rows() != n {
            return Err(Error::DimensionMismatch {
                context: "moment encoder noise rows",
                expected: n,
                actual: tape.value(v[0]).rows(),
            });
        }
        let mut z = None;
        for (i, &vi) in v.iter().enumerate() {
            let ai = tape.slice_cols(a, i * d, (i + 1) * d)?;
            let term = tape.mul(vi, ai)?;
            z = Some(match z {
                None => term,
                Some(acc) => tape.add(acc, term)?,
            });
        }
        let av = tape.value(a);
        let mut mean = vec![0.0; n * d];
        let mut var = vec![0.0; n * d];
        for r in 0..n {
            let row = av.row_slice(r);
            for (i, (mi, vi)) in moments.mean.iter().zip(&moments.var).enumerate() {
                for k in 0..d {
                    let c = row[i * d + k];
                    mean[r * d + k] += mi[k] * c;
                    var[r * d + k] += vi[k] * c * c;
                }
            }
        }
        let stddev = var.into_iter().map(f64::sqrt).collect();
        Ok(MomentSample {
            z: z.expect("at least two bases"),
            mean: Tensor::matrix(n, d, mean)?,
            stddev: Tensor::matrix(n, d, stddev)?,
        })
    }
}

fn moments_of(v: &[Tensor]) -> Result<BasisMoments> {
    let n = v[0].rows();
    if n < 2 {
        return Err(Error::NotEnoughSamples(format!(
            "basis moments need at least 2 noise draws, got {n}"
        )));
    }
    let mut mean = Vec::with_capacity(v.len());
    let mut var = Vec::with_capacity(v.len());
    for t in v {
        let d = t.cols();
        let mut m = vec![0.0; d];
        for r in 0..n {
            for (mk, x) in m.iter_mut().zip(t.row_slice(r)) {
                *mk += x;
            }
        }
        m.iter_mut().for_each(|x| *x /= n as f64);
        let mut s = vec![0.0; d];
        for r in 0..n {
            for ((sk, x), mk) in s.iter_mut().zip(t.row_slice(r)).zip(&m) {
                *sk += (x - mk) * (x - mk);
            }
        }
        s.iter_mut().for_each(|x| *x /= (n - 1) as f64);
        mean.push(m);
        var.push(s);
    }
    Ok(BasisMoments { mean, var })
}

/// Diagonal Gaussian inference model `x -> (mean, log_std)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianEncoder {
    net: Mlp,
    latent_dim: usize,
}

impl GaussianEncoder {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        data_dim: usize,
        latent_dim: usize,
        hidden: &[usize],
        act: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut widths = vec![data_dim];
        widths.extend_from_slice(hidden);
        widths.push(2 * latent_dim);
        let spec = MlpSpec {
            widths,
            hidden: act,
            output: Activation::Identity,
        };
        let net = Mlp::new(params, "enc", spec, Init::GlorotUniform, rng)?;
        Ok(Self { net, latent_dim })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn data_dim(&self) -> usize {
        self.net.spec().input_dim()
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    /// Returns `(mean, log_std)`, each `[n, d]`; `log_std` is clamped to `[-10, 10]`.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<(Var, Var)> {
        let out = self.net.forward(tape, bound, x)?;
        let d = self.latent_dim;
        let mean = tape.slice_cols(out, 0, d)?;
        let log_std = tape.slice_cols(out, d, 2 * d)?;
        let log_std = tape.clamp(log_std, LOG_STD_MIN, LOG_STD_MAX);
        Ok((mean, log_std))
    }
}

/// Any of the supported inference models.
#[derive(Clone, Debug, PartialEq)]
pub enum Encoder {
    BlackBox(BlackBoxEncoder),
    Moment(MomentEncoder),
    Gaussian(GaussianEncoder),
}

/// A batch of latent draws together with whatever density information the encoder exposes.
#[derive(Clone, Debug)]
pub struct EncoderSample {
    pub z: Var,
    /// Closed-form moments, for moment encoders.
    pub moments: Option<(Tensor, Tensor)>,
    /// `(mean, log_std)` on the tape, for Gaussian encoders.
    pub gaussian: Option<(Var, Var)>,
}

impl Encoder {
    pub fn latent_dim(&self) -> usize {
        match self {
            Encoder::BlackBox(e) => e.latent_dim(),
            Encoder::Moment(e) => e.latent_dim(),
            Encoder::Gaussian(e) => e.latent_dim(),
        }
    }

    pub fn data_dim(&self) -> usize {
        match self {
            Encoder::BlackBox(e) => e.data_dim(),
            Encoder::Moment(e) => e.data_dim(),
            Encoder::Gaussian(e) => e.data_dim(),
        }
    }

    /// Columns of noise consumed per example.
    pub fn noise_width(&self) -> usize {
        match self {
            Encoder::BlackBox(e) => e.noise_dim(),
            Encoder::Moment(e) => e.noise_width(),
            Encoder::Gaussian(e) => e.latent_dim(),
        }
    }

    pub fn sample(&self, tape: &mut Tape, bound: &Bound, x: Var, eps: &Tensor) -> Result<EncoderSample> {
        match self {
            Encoder::BlackBox(e) => Ok(EncoderSample {
                z: e.forward(tape, bound, x, eps)?,
                moments: None,
                gaussian: None,
            }),
            Encoder::Moment(e) => {
                let s = e.forward(tape, bound, x, eps)?;
                Ok(EncoderSample {
                    z: s.z,
                    moments: Some((s.mean, s.stddev)),
                    gaussian: None,
                })
            }
            Encoder::Gaussian(e) => {
                let (mean, log_std) = e.forward(tape, bound, x)?;
                let z = reparam_sample_rows(tape, mean, log_std, eps)?;
                Ok(EncoderSample {
                    z,
                    moments: None,
                    gaussian: Some((mean, log_std)),
                })
            }
        }
    }

    /// Draws `z` for every row of `x` without recording gradients.
    pub fn sample_values(&self, params: &ParamSet, x: &Tensor, eps: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::without_recording();
        let bound = tape.bind_frozen(params);
        let xv = tape.constant(x.clone());
        let s = self.sample(&mut tape, &bound, xv, eps)?;
        Ok(tape.value(s.z).clone())
    }
}
