use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamSet, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Per-parameter-set optimizer state. Updates descend the gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    t: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, params: &ParamSet) -> Self {
        let (first, second) = match kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::Adam => {
                let z: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
                (z.clone(), z)
            }
        };
        Self {
            kind,
            first,
            second,
            t: 0,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn update(&mut self, params: &mut ParamSet, grads: &[Tensor], step_size: f64) {
        assert_eq!(params.len(), grads.len(), "one gradient per parameter tensor");
        self.t += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.tensors_mut().iter_mut().zip(grads) {
                    assert_eq!(p.shape(), g.shape());
                    for (w, dw) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= step_size * dw;
                    }
                }
            }
            OptimizerKind::Adam => {
                let bc1 = 1.0 - ADAM_BETA1.powf(self.t as f64);
                let bc2 = 1.0 - ADAM_BETA2.powf(self.t as f64);
                for (i, (p, g)) in params.tensors_mut().iter_mut().zip(grads).enumerate() {
                    assert_eq!(p.shape(), g.shape());
                    let (m, v) = (&mut self.first[i], &mut self.second[i]);
                    for (j, (w, &dw)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * dw;
                        v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * dw * dw;
                        let mhat = m[j] / bc1;
                        let vhat = v[j] / bc2;
                        *w -= step_size * mhat / (vhat.sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
}

/// Functional form of [`Optimizer::update`].
pub fn optimizer_update(params: &mut ParamSet, grads: &[Tensor], opt: &mut Optimizer, step_size: f64) {
    opt.update(params, grads, step_size);
}

/// Rescales `grads` so their joint Euclidean norm is at most `max_norm`; returns the norm before scaling.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data().iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(v: &[f64]) -> ParamSet {
        let mut p = ParamSet::new();
        p.push("w", Tensor::row(v));
        p
    }

    #[test]
    fn sgd_examples() {
        let mut p = single(&[0.5, -1.0]);
        let mut opt = Optimizer::new(OptimizerKind::Sgd, &p);
        opt.update(&mut p, &[Tensor::row(&[0.0, 0.0])], 0.1);
        assert_eq!(p.get(0).data(), &[0.5, -1.0]);
        let mut p = single(&[0.0]);
        optimizer_update(&mut p, &[Tensor::row(&[1.0])], &mut opt, 0.1);
        assert_eq!(p.get(0).data(), &[-0.1]);
    }

    #[test]
    fn adam_first_step_has_step_size_magnitude() {
        for g in [1e-6, 0.3, 1.0, 250.0, -4e4] {
            let mut p = single(&[1.0]);
            let mut opt = Optimizer::new(OptimizerKind::Adam, &p);
            opt.update(&mut p, &[Tensor::row(&[g])], 0.01);
            let delta = p.get(0).data()[0] - 1.0;
            // g / (|g| + eps) after bias correction
            let expect = -0.01 * g / (g.abs() + ADAM_EPS);
            assert!((delta - expect).abs() < 1e-15, "{g}: {delta}");
            assert!((delta.abs() - 0.01).abs() < 1e-4);
        }
    }

    #[test]
    fn adam_zero_step_size_keeps_params() {
        let mut p = single(&[1.0, 2.0]);
        let mut opt = Optimizer::new(OptimizerKind::Adam, &p);
        opt.update(&mut p, &[Tensor::row(&[3.0, -1.0])], 0.0);
        assert_eq!(p.get(0).data(), &[1.0, 2.0]);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn clipping() {
        let mut g = vec![Tensor::row(&[3.0]), Tensor::row(&[4.0])];
        assert_eq!(clip_global_norm(&mut g, 10.0), 5.0);
        assert_eq!(g[0].data(), &[3.0]);
        clip_global_norm(&mut g, 1.0);
        assert!((g[0].data()[0] - 0.6).abs() < 1e-15 && (g[1].data()[0] - 0.8).abs() < 1e-15);
    }
}
