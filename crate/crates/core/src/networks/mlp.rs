use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bound, ParamSet, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Identity,
    #[default]
    Relu,
    Elu,
    Tanh,
    Sigmoid,
    Softplus,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, v: Var) -> Var {
        match self {
            Activation::Identity => v,
            Activation::Relu => tape.relu(v),
            Activation::Elu => tape.elu(v),
            Activation::Tanh => tape.tanh(v),
            Activation::Sigmoid => tape.sigmoid(v),
            Activation::Softplus => tape.softplus(v),
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => crate::autodiff::sigmoid(x),
            Activation::Softplus => crate::autodiff::softplus(x),
        }
    }
}

/// Layer widths and activations of a fully connected network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
}

impl MlpSpec {
    /// `input -> hidden^layers -> output` with the given hidden activation and a linear output.
    pub fn new(input: usize, hidden_width: usize, hidden_layers: usize, output: usize, act: Activation) -> Self {
        let mut widths = vec![input];
        widths.extend(std::iter::repeat_n(hidden_width, hidden_layers));
        widths.push(output);
        Self {
            widths,
            hidden: act,
            output: Activation::Identity,
        }
    }

    pub fn linear(input: usize, output: usize) -> Self {
        Self {
            widths: vec![input, output],
            hidden: Activation::Identity,
            output: Activation::Identity,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated widths")
    }

    fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.widths.contains(&0) {
            return Err(Error::Config(format!(
                "an MLP needs at least two positive widths, got {:?}",
                self.widths
            )));
        }
        Ok(())
    }
}

/// Weight initialization scheme.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`; biases zero.
    GlorotUniform,
    Zeros,
}

/// A fully connected network whose weights live in a shared [`ParamSet`].
///
/// Layer `l` owns parameters `first + 2l` (weight, `[in, out]`) and
/// `first + 2l + 1` (bias, `[1, out]`).
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    first: usize,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        spec: MlpSpec,
        init: Init,
        rng: &mut R,
    ) -> Result<Self> {
        spec.validate()?;
        let first = params.len();
        for (l, w) in spec.widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = match init {
                Init::GlorotUniform => {
                    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    (0..fan_in * fan_out).map(|_| rng.random_range(-a..a)).collect()
                }
                Init::Zeros => vec![0.0; fan_in * fan_out],
            };
            params.push(format!("{name}.{l}.w"), Tensor::matrix(fan_in, fan_out, weights)?);
            params.push(format!("{name}.{l}.b"), Tensor::zeros(&[1, fan_out]));
        }
        Ok(Self { spec, first })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn num_layers(&self) -> usize {
        self.spec.widths.len() - 1
    }

    /// Indices of this network's tensors in its parameter set.
    pub fn param_range(&self) -> std::ops::Range<usize> {
        self.first..self.first + 2 * self.num_layers()
    }

    pub fn weight_index(&self, layer: usize) -> usize {
        self.first + 2 * layer
    }

    pub fn bias_index(&self, layer: usize) -> usize {
        self.first + 2 * layer + 1
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, input: Var) -> Result<Var> {
        let cols = tape.value(input).cols();
        if cols != self.spec.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "mlp input",
                expected: self.spec.input_dim(),
                actual: cols,
            });
        }
        let last = self.num_layers() - 1;
        let mut h = input;
        for l in 0..=last {
            let z = tape.matmul(h, bound.var(self.weight_index(l)))?;
            let z = tape.add_row(z, bound.var(self.bias_index(l)))?;
            let act = if l == last { self.spec.output } else { self.spec.hidden };
            h = act.apply(tape, z);
        }
        Ok(h)
    }

    /// Forward pass without gradient bookkeeping.
    pub fn eval(&self, params: &ParamSet, input: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::without_recording();
        let bound = tape.bind_frozen(params);
        let x = tape.constant(input.clone());
        let y = self.forward(&mut tape, &bound, x)?;
        Ok(tape.value(y).clone())
    }
}

/// Builds a fresh parameter set holding one network, initialized from `seed`.
pub fn init_params(spec: &MlpSpec, seed: u64) -> Result<(Mlp, ParamSet)> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    let mlp = Mlp::new(&mut params, "mlp", spec.clone(), Init::GlorotUniform, &mut rng)?;
    Ok((mlp, params))
}

/// Functional alias of [`Mlp::eval`].
pub fn mlp_forward(net: &Mlp, params: &ParamSet, input: &Tensor) -> Result<Tensor> {
    net.eval(params, input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_diff_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::new(&mut params, "n", MlpSpec::new(3, 5, 2, 2, Activation::Tanh), Init::Zeros, &mut rng).unwrap();
        let out = net.eval(&params, &Tensor::row(&[1.0, -2.0, 3.0])).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0]);
    }

    #[test]
    fn identity_linear_layer() {
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::new(&mut params, "n", MlpSpec::linear(3, 3), Init::Zeros, &mut rng).unwrap();
        let w = params.get_mut(net.weight_index(0));
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let x = Tensor::from_rows(&[vec![1.0, -2.0, 3.5], vec![0.25, 0.0, -1.0]]).unwrap();
        assert_eq!(net.eval(&params, &x).unwrap(), x);
    }

    #[test]
    fn matches_straight_line_forward() {
        let spec = MlpSpec::new(3, 4, 1, 2, Activation::Tanh);
        let (net, params) = init_params(&spec, 11).unwrap();
        let x = [0.3, -1.2, 0.7];
        let (w0, b0) = (params.get(0).data(), params.get(1).data());
        let (w1, b1) = (params.get(2).data(), params.get(3).data());
        let mut h = [0.0; 4];
        for j in 0..4 {
            let mut s = b0[j];
            for i in 0..3 {
                s += x[i] * w0[i * 4 + j];
            }
            h[j] = s.tanh();
        }
        let mut y = [0.0; 2];
        for j in 0..2 {
            y[j] = b1[j] + (0..4).map(|i| h[i] * w1[i * 2 + j]).sum::<f64>();
        }
        let out = mlp_forward(&net, &params, &Tensor::row(&x)).unwrap();
        for j in 0..2 {
            assert!((out.data()[j] - y[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let (net, params) = init_params(&MlpSpec::linear(3, 1), 0).unwrap();
        assert!(matches!(
            net.eval(&params, &Tensor::row(&[1.0, 2.0])),
            Err(Error::DimensionMismatch { expected: 3, actual: 2, .. })
        ));
        assert!(init_params(&MlpSpec { widths: vec![3], hidden: Activation::Relu, output: Activation::Identity }, 0).is_err());
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let spec = MlpSpec::new(4, 8, 2, 3, Activation::Relu);
        assert_eq!(init_params(&spec, 5).unwrap().1, init_params(&spec, 5).unwrap().1);
        assert_ne!(init_params(&spec, 5).unwrap().1, init_params(&spec, 6).unwrap().1);
        let (_, p) = init_params(&spec, 5).unwrap();
        assert!(p.iter().filter(|(n, _)| n.ends_with(".b")).all(|(_, t)| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn glorot_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut draws = Vec::new();
        while draws.len() < 10_000 {
            let mut params = ParamSet::new();
            let net = Mlp::new(&mut params, "n", MlpSpec::linear(4, 4), Init::GlorotUniform, &mut rng).unwrap();
            draws.extend_from_slice(params.get(net.weight_index(0)).data());
        }
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var / 0.25 - 1.0).abs() < 0.2, "{var}");
    }

    #[test]
    fn gradients_pass_finite_differences() {
        for act in [Activation::Tanh, Activation::Elu, Activation::Sigmoid, Activation::Softplus, Activation::Relu] {
            let spec = MlpSpec::new(3, 6, 2, 2, act);
            let (net, params) = init_params(&spec, 3).unwrap();
            let x = Tensor::from_rows(&[vec![0.3, -1.2, 0.7], vec![1.1, 0.4, -0.2]]).unwrap();
            let report = finite_diff_check(
                |tape, b| {
                    let xv = tape.constant(x.clone());
                    let y = net.forward(tape, b, xv)?;
                    let y = tape.square(y);
                    Ok(tape.sum(y))
                },
                &params,
                1e-6,
                1e-4,
            )
            .unwrap();
            assert!(report.passed(), "{act:?}: {report:?}");
        }
    }
}
