//! Straight-line reference: dense layers over plain vectors, tanh hidden units, linear output.

pub struct Layer {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub n_in: usize,
    pub n_out: usize,
}

pub fn layers(p: &crate::autodiff::ParamSet) -> Vec<Layer> {
    p.tensors()
        .chunks(2)
        .map(|c| Layer {
            w: c[0].data().to_vec(),
            b: c[1].data().to_vec(),
            n_in: c[0].shape()[0],
            n_out: c[0].shape()[1],
        })
        .collect()
}

pub fn forward(net: &[Layer], x: &[f64]) -> Vec<Vec<f64>> {
    let mut acts = vec![x.to_vec()];
    for (l, layer) in net.iter().enumerate() {
        let h = acts.last().unwrap();
        let mut y = layer.b.clone();
        for j in 0..layer.n_out {
            for i in 0..layer.n_in {
                y[j] += h[i] * layer.w[i * layer.n_out + j];
            }
        }
        if l + 1 < net.len() {
            y.iter_mut().for_each(|v| *v = v.tanh());
        }
        acts.push(y);
    }
    acts
}

/// Accumulates parameter gradients into `grads` and returns the input gradient.
pub fn backward(net: &[Layer], acts: &[Vec<f64>], gout: &[f64], grads: &mut [(Vec<f64>, Vec<f64>)]) -> Vec<f64> {
    let mut g = gout.to_vec();
    for l in (0..net.len()).rev() {
        let layer = &net[l];
        if l + 1 < net.len() {
            for (gj, a) in g.iter_mut().zip(&acts[l + 1]) {
                *gj *= 1.0 - a * a;
            }
        }
        let h = &acts[l];
        let mut gin = vec![0.0; layer.n_in];
        for i in 0..layer.n_in {
            for j in 0..layer.n_out {
                grads[l].0[i * layer.n_out + j] += h[i] * g[j];
                gin[i] += layer.w[i * layer.n_out + j] * g[j];
            }
        }
        for j in 0..layer.n_out {
            grads[l].1[j] += g[j];
        }
        g = gin;
    }
    g
}

pub fn zero_grads(net: &[Layer]) -> Vec<(Vec<f64>, Vec<f64>)> {
    net.iter().map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()])).collect()
}

pub fn sgd(net: &mut [Layer], grads: &[(Vec<f64>, Vec<f64>)], lr: f64) {
    for (layer, (gw, gb)) in net.iter_mut().zip(grads) {
        layer.w.iter_mut().zip(gw).for_each(|(w, g)| *w -= lr * g);
        layer.b.iter_mut().zip(gb).for_each(|(b, g)| *b -= lr * g);
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softplus(x: f64) -> f64 {
    (1.0 + x.exp()).ln()
}
