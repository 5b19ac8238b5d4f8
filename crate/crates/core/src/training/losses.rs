use crate::autodiff::{softplus, Tape, Var};
use crate::error::Result;

/// Logits above this are clamped before exponentiation in the f-divergence loss.
pub const FGAN_LOGIT_CAP: f64 = 30.0;

/// Logistic discriminator loss, `mean softplus(-T_q) + mean softplus(T_p)`.
pub fn discriminator_loss_gan(tape: &mut Tape, logits_q: Var, logits_prior: Var) -> Result<Var> {
    let nq = tape.neg(logits_q);
    let a = tape.softplus(nq);
    let a = tape.mean(a);
    let b = tape.softplus(logits_prior);
    let b = tape.mean(b);
    tape.add(a, b)
}

/// KL f-divergence discriminator loss, `mean exp(T_p - 1) - mean T_q`.
///
/// Its minimizer is `T = 1 + log(q / p)`. Returns the loss and the number of
/// prior logits clamped at [`FGAN_LOGIT_CAP`].
pub fn discriminator_loss_fgan(tape: &mut Tape, logits_q: Var, logits_prior: Var) -> Result<(Var, usize)> {
    let clamped = tape
        .value(logits_prior)
        .data()
        .iter()
        .filter(|&&t| t > FGAN_LOGIT_CAP)
        .count();
    let tp = tape.clamp(logits_prior, f64::NEG_INFINITY, FGAN_LOGIT_CAP);
    let tp = tape.add_scalar(tp, -1.0);
    let e = tape.exp(tp);
    let e = tape.mean(e);
    let q = tape.mean(logits_q);
    Ok((tape.sub(e, q)?, clamped))
}

pub fn discriminator_loss_gan_values(logits_q: &[f64], logits_prior: &[f64]) -> f64 {
    let a = logits_q.iter().map(|&t| softplus(-t)).sum::<f64>() / logits_q.len() as f64;
    let b = logits_prior.iter().map(|&t| softplus(t)).sum::<f64>() / logits_prior.len() as f64;
    a + b
}

pub fn discriminator_loss_fgan_values(logits_q: &[f64], logits_prior: &[f64]) -> f64 {
    let e = logits_prior
        .iter()
        .map(|&t| (t.min(FGAN_LOGIT_CAP) - 1.0).exp())
        .sum::<f64>()
        / logits_prior.len() as f64;
    e - logits_q.iter().sum::<f64>() / logits_q.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    #[test]
    fn gan_loss_examples() {
        let l = discriminator_loss_gan_values(&[0.0; 5], &[0.0; 5]);
        assert!((l - 4.0f64.ln()).abs() < 1e-15);
        assert!((l - 1.386_294_361_119_890_6).abs() < 1e-15);
        let l = discriminator_loss_gan_values(&[800.0, 60.0], &[-800.0, -60.0]);
        assert!(l < 1e-25);
    }

    #[test]
    fn fgan_loss_examples() {
        assert_eq!(discriminator_loss_fgan_values(&[1.0; 3], &[1.0; 3]), 0.0);
        // constant T = c with q = p: e^{c-1} - c, minimized at c = 1
        let f = |c: f64| discriminator_loss_fgan_values(&[c], &[c]);
        for c in [-2.0, 0.0, 0.5, 0.99, 1.01, 2.0, 5.0] {
            assert!((f(c) - ((c - 1.0).exp() - c)).abs() < 1e-12);
            assert!(f(c) > f(1.0));
        }
        assert!(discriminator_loss_fgan_values(&[0.0], &[1e6]).is_finite());
    }

    #[test]
    fn fgan_is_stationary_at_matched_densities() {
        let mut tape = Tape::new();
        let tq = tape.leaf(Tensor::full(&[4, 1], 1.0));
        let tp = tape.leaf(Tensor::full(&[4, 1], 1.0));
        let (l, clamped) = discriminator_loss_fgan(&mut tape, tq, tp).unwrap();
        assert_eq!(clamped, 0);
        let g = tape.backward(l).unwrap();
        let total: f64 = g.get(tq).unwrap().data().iter().chain(g.get(tp).unwrap().data()).sum();
        assert!(total.abs() < 1e-15);
    }

    #[test]
    fn tape_losses_match_values() {
        let q = [0.3, -2.0, 5.0];
        let p = [-1.0, 0.7, 40.0];
        let mut tape = Tape::new();
        let tq = tape.constant(Tensor::new(vec![3, 1], q.to_vec()).unwrap());
        let tp = tape.constant(Tensor::new(vec![3, 1], p.to_vec()).unwrap());
        let g = discriminator_loss_gan(&mut tape, tq, tp).unwrap();
        assert!((tape.value(g).item() - discriminator_loss_gan_values(&q, &p)).abs() < 1e-14);
        let (f, clamped) = discriminator_loss_fgan(&mut tape, tq, tp).unwrap();
        assert_eq!(clamped, 1);
        assert!((tape.value(f).item() - discriminator_loss_fgan_values(&q, &p)).abs() < 1e-9);
    }
}
