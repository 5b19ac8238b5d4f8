use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Init, Mlp, MlpSpec};
use crate::autodiff::{Bound, ParamSet, Tape, Tensor, Var};
use crate::distributions::std_normal_log_prob_rows;
use crate::error::Result;

/// How the discriminator combines `x` and `z`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdversaryForm {
    /// `<f(x), h(z)> + s(x) + t(z)`.
    InnerProduct,
    /// A single network over `concat(x, z)`.
    Joint,
    /// A network over `z` alone; `x` is ignored.
    ZOnly,
}

#[derive(Clone, Debug, PartialEq)]
enum Nets {
    InnerProduct {
        x_net: Mlp,
        z_net: Mlp,
        x_side: Option<Mlp>,
        z_side: Option<Mlp>,
    },
    Joint(Mlp),
    ZOnly(Mlp),
}

/// Discriminator `T(x, z)` producing one logit per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Adversary {
    nets: Nets,
    log_prior_offset: bool,
}

/// Shape of an adversary; every hidden layer has `hidden_width` units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversarySpec {
    pub form: AdversaryForm,
    pub data_dim: usize,
    pub latent_dim: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    /// Output width of the two towers of the inner-product form.
    pub embed_dim: usize,
    pub side_nets: bool,
    pub log_prior_offset: bool,
    pub activation: Activation,
}

impl Adversary {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, spec: &AdversarySpec, init: Init, rng: &mut R) -> Result<Self> {
        let tower = |input: usize, output: usize| {
            MlpSpec::new(input, spec.hidden_width, spec.hidden_layers, output, spec.activation)
        };
        let nets = match spec.form {
            AdversaryForm::InnerProduct => {
                let x_net = Mlp::new(params, "adv.x", tower(spec.data_dim, spec.embed_dim), init, rng)?;
                let z_net = Mlp::new(params, "adv.z", tower(spec.latent_dim, spec.embed_dim), init, rng)?;
                let (x_side, z_side) = if spec.side_nets {
                    (
                        Some(Mlp::new(params, "adv.xs", tower(spec.data_dim, 1), init, rng)?),
                        Some(Mlp::new(params, "adv.zs", tower(spec.latent_dim, 1), init, rng)?),
                    )
                } else {
                    (None, None)
                };
                Nets::InnerProduct {
                    x_net,
                    z_net,
                    x_side,
                    z_side,
                }
            }
            AdversaryForm::Joint => Nets::Joint(Mlp::new(
                params,
                "adv.joint",
                tower(spec.data_dim + spec.latent_dim, 1),
                init,
                rng,
            )?),
            AdversaryForm::ZOnly => Nets::ZOnly(Mlp::new(params, "adv.z", tower(spec.latent_dim, 1), init, rng)?),
        };
        Ok(Self {
            nets,
            log_prior_offset: spec.log_prior_offset,
        })
    }

    pub fn form(&self) -> AdversaryForm {
        match self.nets {
            Nets::InnerProduct { .. } => AdversaryForm::InnerProduct,
            Nets::Joint(_) => AdversaryForm::Joint,
            Nets::ZOnly(_) => AdversaryForm::ZOnly,
        }
    }

    pub fn has_log_prior_offset(&self) -> bool {
        self.log_prior_offset
    }

    /// All networks in declaration order: towers first, then side networks.
    pub fn networks(&self) -> Vec<&Mlp> {
        match &self.nets {
            Nets::InnerProduct {
                x_net,
                z_net,
                x_side,
                z_side,
            } => {
                let mut v = vec![x_net, z_net];
                v.extend(x_side.iter());
                v.extend(z_side.iter());
                v
            }
            Nets::Joint(n) | Nets::ZOnly(n) => vec![n],
        }
    }

    /// Logits `T(x, z)` as `[n, 1]`.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var, z: Var) -> Result<Var> {
        let t = match &self.nets {
            Nets::InnerProduct {
                x_net,
                z_net,
                x_side,
                z_side,
            } => {
                let fx = x_net.forward(tape, bound, x)?;
                let fz = z_net.forward(tape, bound, z)?;
                let prod = tape.mul(fx, fz)?;
                let mut t = tape.sum_rows(prod)?;
                if let Some(s) = x_side {
                    let sx = s.forward(tape, bound, x)?;
                    t = tape.add(t, sx)?;
                }
                if let Some(s) = z_side {
                    let sz = s.forward(tape, bound, z)?;
                    t = tape.add(t, sz)?;
                }
                t
            }
            Nets::Joint(net) => {
                let xz = tape.concat(x, z)?;
                net.forward(tape, bound, xz)?
            }
            Nets::ZOnly(net) => net.forward(tape, bound, z)?,
        };
        if self.log_prior_offset {
            let lp = std_normal_log_prob_rows(tape, z)?;
            tape.add(t, lp)
        } else {
            Ok(t)
        }
    }

    /// Logits without gradient bookkeeping.
    pub fn logits(&self, params: &ParamSet, x: &Tensor, z: &Tensor) -> Result<Vec<f64>> {
        let mut tape = Tape::without_recording();
        let bound = tape.bind_frozen(params);
        let xv = tape.constant(x.clone());
        let zv = tape.constant(z.clone());
        let t = self.forward(&mut tape, &bound, xv, zv)?;
        Ok(tape.value(t).data().to_vec())
    }
}

/// Logit of a z-only adversary; `x` never enters the computation.
pub fn aae_z_only_logit(adv: &Adversary, params: &ParamSet, z: &Tensor) -> Result<Vec<f64>> {
    let x = Tensor::zeros(&[z.rows(), 1]);
    match adv.form() {
        AdversaryForm::ZOnly => adv.logits(params, &x, z),
        other => Err(crate::error::Error::Config(format!(
            "z-only logit requested from a {other:?} adversary"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_diff_check;
    use crate::distributions::std_normal_log_prob;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn spec(form: AdversaryForm) -> AdversarySpec {
        AdversarySpec {
            form,
            data_dim: 4,
            latent_dim: 2,
            hidden_width: 6,
            hidden_layers: 2,
            embed_dim: 3,
            side_nets: true,
            log_prior_offset: false,
            activation: Activation::Tanh,
        }
    }

    fn normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
    }

    #[test]
    fn zero_adversary_is_uninformative() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for form in [AdversaryForm::InnerProduct, AdversaryForm::Joint, AdversaryForm::ZOnly] {
            let mut params = ParamSet::new();
            let adv = Adversary::new(&mut params, &spec(form), Init::Zeros, &mut rng).unwrap();
            let logits = adv.logits(&params, &normal(&mut rng, 3, 4), &normal(&mut rng, 3, 2)).unwrap();
            assert!(logits.iter().all(|&t| t == 0.0));
            assert!(logits.iter().all(|&t| crate::autodiff::sigmoid(t) == 0.5));
        }
    }

    #[test]
    fn zeroed_z_side_makes_logit_independent_of_z() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = ParamSet::new();
        let adv = Adversary::new(&mut params, &spec(AdversaryForm::InnerProduct), Init::GlorotUniform, &mut rng).unwrap();
        let nets = adv.networks();
        for net in [nets[1], nets[3]] {
            for i in net.param_range() {
                params.get_mut(i).data_mut().fill(0.0);
            }
        }
        let x = normal(&mut rng, 1, 4);
        let a = adv.logits(&params, &x, &normal(&mut rng, 1, 2)).unwrap()[0];
        let b = adv.logits(&params, &x, &normal(&mut rng, 1, 2)).unwrap()[0];
        assert_eq!(a, b);
        assert_ne!(a, 0.0);
    }

    #[test]
    fn z_only_ignores_x() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut params = ParamSet::new();
        let adv = Adversary::new(&mut params, &spec(AdversaryForm::ZOnly), Init::GlorotUniform, &mut rng).unwrap();
        let z = normal(&mut rng, 2, 2);
        let a = adv.logits(&params, &normal(&mut rng, 2, 4), &z).unwrap();
        let b = adv.logits(&params, &normal(&mut rng, 2, 4), &z).unwrap();
        assert_eq!(a, b);
        assert_eq!(aae_z_only_logit(&adv, &params, &z).unwrap(), a);
    }

    #[test]
    fn joint_and_inner_product_agree_on_linear_toy() {
        // T(x, z) = 1.5 x - 0.8 z + 0.3 in both forms
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let linear = |form| AdversarySpec {
            form,
            data_dim: 1,
            latent_dim: 1,
            hidden_width: 1,
            hidden_layers: 0,
            embed_dim: 1,
            side_nets: true,
            log_prior_offset: false,
            activation: Activation::Identity,
        };
        let mut pj = ParamSet::new();
        let joint = Adversary::new(&mut pj, &linear(AdversaryForm::Joint), Init::Zeros, &mut rng).unwrap();
        let j = joint.networks()[0].clone();
        pj.get_mut(j.weight_index(0)).data_mut().copy_from_slice(&[1.5, -0.8]);
        pj.get_mut(j.bias_index(0)).data_mut()[0] = 0.3;

        let mut pi = ParamSet::new();
        let inner = Adversary::new(&mut pi, &linear(AdversaryForm::InnerProduct), Init::Zeros, &mut rng).unwrap();
        let nets: Vec<Mlp> = inner.networks().into_iter().cloned().collect();
        // <f(x), h(z)> with f = 2 (constant) and h(z) = -0.4 z + 0.1; side s(x) = 1.5 x + 0.1
        pi.get_mut(nets[0].bias_index(0)).data_mut()[0] = 2.0;
        pi.get_mut(nets[1].weight_index(0)).data_mut()[0] = -0.4;
        pi.get_mut(nets[1].bias_index(0)).data_mut()[0] = 0.1;
        pi.get_mut(nets[2].weight_index(0)).data_mut()[0] = 1.5;
        pi.get_mut(nets[2].bias_index(0)).data_mut()[0] = 0.1;

        for _ in 0..20 {
            let x = normal(&mut rng, 1, 1);
            let z = normal(&mut rng, 1, 1);
            let a = joint.logits(&pj, &x, &z).unwrap()[0];
            let b = inner.logits(&pi, &x, &z).unwrap()[0];
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
            assert!((a - (1.5 * x.item() - 0.8 * z.item() + 0.3)).abs() < 1e-14);
        }
    }

    #[test]
    fn log_prior_offset_is_added() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = spec(AdversaryForm::Joint);
        s.log_prior_offset = true;
        let mut params = ParamSet::new();
        let adv = Adversary::new(&mut params, &s, Init::Zeros, &mut rng).unwrap();
        let z = Tensor::row(&[0.5, -1.0]);
        let t = adv.logits(&params, &normal(&mut rng, 1, 4), &z).unwrap()[0];
        assert!((t - std_normal_log_prob(z.data())).abs() < 1e-15);
    }

    #[test]
    fn adversary_gradients_pass_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = normal(&mut rng, 3, 4);
        let z = normal(&mut rng, 3, 2);
        for form in [AdversaryForm::InnerProduct, AdversaryForm::Joint, AdversaryForm::ZOnly] {
            let mut params = ParamSet::new();
            let mut s = spec(form);
            s.log_prior_offset = true;
            let adv = Adversary::new(&mut params, &s, Init::GlorotUniform, &mut rng).unwrap();
            let report = finite_diff_check(
                |tape, b| {
                    let xv = tape.constant(x.clone());
                    let zv = tape.constant(z.clone());
                    let t = adv.forward(tape, b, xv, zv)?;
                    let t = tape.softplus(t);
                    Ok(tape.sum(t))
                },
                &params,
                1e-6,
                1e-4,
            )
            .unwrap();
            assert!(report.passed(), "{form:?}: {report:?}");
        }
    }
}
