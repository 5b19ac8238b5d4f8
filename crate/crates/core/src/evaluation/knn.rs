use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::samples::SampleSet;
use crate::error::{Error, Result};

pub const DEFAULT_KNN_K: usize = 5;
pub const DUPLICATE_JITTER: f64 = 1e-10;
/// Identifier of the estimator, recorded next to every divergence it produces.
pub const KNN_ESTIMATOR: &str = "wang-kulkarni-verdu-knn-k5";

/// Squared Euclidean distance from `x` to its `k`-th nearest row of `set`,
/// skipping row `skip` when given.
fn kth_nearest_sq(set: &SampleSet, x: &[f64], k: usize, skip: Option<usize>, best: &mut Vec<f64>) -> f64 {
    best.clear();
    best.resize(k, f64::INFINITY);
    for (j, y) in set.rows().enumerate() {
        if Some(j) == skip {
            continue;
        }
        let mut d2 = 0.0;
        for (a, b) in x.iter().zip(y) {
            let t = a - b;
            d2 += t * t;
        }
        if d2 < best[k - 1] {
            // insertion into the sorted k smallest
            let mut i = k - 1;
            while i > 0 && best[i - 1] > d2 {
                best[i] = best[i - 1];
                i -= 1;
            }
            best[i] = d2;
        }
    }
    best[k - 1]
}

fn jittered(s: &SampleSet, seed: u64) -> SampleSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = s
        .data()
        .iter()
        .map(|v| v + DUPLICATE_JITTER * (2.0 * rng.random::<f64>() - 1.0))
        .collect();
    SampleSet::new(s.label.clone(), s.dim(), data).expect("finite input stays finite")
}

/// k-nearest-neighbour estimate of `KL(p || q)` from samples:
/// `d/n sum_i log(nu_k(i) / rho_k(i)) + log(m / (n - 1))`, where `rho_k(i)` is
/// the distance from `p_i` to its k-th neighbour among the other p-samples and
/// `nu_k(i)` the distance to its k-th neighbour among the q-samples.
pub fn knn_kl_estimate(p: &SampleSet, q: &SampleSet, k: usize) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            context: "knn_kl_estimate sample dimension",
            expected: p.dim(),
            actual: q.dim(),
        });
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if p.len() < k + 1 || q.len() < k {
        return Err(Error::NotEnoughSamples(format!(
            "k = {k} needs at least {} p-samples and {k} q-samples, got {} and {}",
            k + 1,
            p.len(),
            q.len()
        )));
    }
    match estimate(p, q, k) {
        Some(v) => Ok(v),
        None => {
            log::warn!(
                "duplicate points in {:?} / {:?}; jittering by {DUPLICATE_JITTER:e}",
                p.label,
                q.label
            );
            estimate(&jittered(p, 1), &jittered(q, 2), k)
                .ok_or_else(|| Error::NotEnoughSamples("zero neighbour distance after jitter".into()))
        }
    }
}

fn estimate(p: &SampleSet, q: &SampleSet, k: usize) -> Option<f64> {
    let (n, m, d) = (p.len(), q.len(), p.dim() as f64);
    let mut buf = Vec::with_capacity(k);
    let mut acc = 0.0;
    for i in 0..n {
        let x = p.row(i);
        let rho2 = kth_nearest_sq(p, x, k, Some(i), &mut buf);
        let nu2 = kth_nearest_sq(q, x, k, None, &mut buf);
        if rho2 == 0.0 || nu2 == 0.0 {
            return None;
        }
        // ratio of distances from ratio of squares
        acc += 0.5 * (nu2.ln() - rho2.ln());
    }
    Some(d / n as f64 * acc + (m as f64 / (n as f64 - 1.0)).ln())
}
