//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Broadcasting is limited to adding a row vector to every row of a matrix
//! ([`Tape::add_row`]); any other shape coercion has to be spelled out with
//! `matmul` against a constant.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, relative_error, GradCheckReport, RELATIVE_ERROR_FLOOR};
pub use params::{Bound, ParamSet};
pub use tape::{Gradients, OpKind, Tape, Var};
pub(crate) use tape::{sigmoid, softplus};
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn m(rows: usize, cols: usize, data: &[f64]) -> Tensor {
        Tensor::matrix(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn tensor_validates_shape() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![0, 2], vec![]).is_err());
        assert!(Tensor::new(vec![], vec![]).is_err());
        let t = Tensor::new(vec![2, 3], vec![0.0; 6]).unwrap();
        assert_eq!(t.numel(), 6);
        assert_eq!((t.rows(), t.cols()), (2, 3));
    }

    #[test]
    fn matmul_identity_and_hand_computed() {
        let mut tape = Tape::new();
        let eye = tape.constant(m(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        let a = tape.constant(m(2, 3, &[1.0, -2.0, 3.5, 0.25, 7.0, -1.0]));
        let out = tape.matmul(eye, a).unwrap();
        assert_eq!(tape.value(out), tape.value(a));

        let x = tape.constant(m(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let y = tape.constant(m(2, 2, &[5.0, 6.0, 7.0, 8.0]));
        let p = tape.matmul(x, y).unwrap();
        assert_eq!(tape.value(p).data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::scalar(0.0));
        let s = tape.sigmoid(z);
        assert_eq!(tape.value(s).item(), 0.5);
    }

    #[test]
    fn shape_mismatch_names_op_and_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        match tape.matmul(a, b) {
            Err(Error::ShapeMismatch { op, lhs, rhs }) => {
                assert_eq!(op, OpKind::MatMul);
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 3]);
            }
            other => panic!("expected shape mismatch, got {other:?}"),
        }
        let c = tape.constant(Tensor::zeros(&[3, 2]));
        let err = tape.add(a, c).unwrap_err().to_string();
        assert!(err.contains("add") && err.contains("[2, 3]") && err.contains("[3, 2]"), "{err}");
        let row = tape.constant(Tensor::zeros(&[1, 2]));
        assert!(tape.add_row(a, row).is_err());
        assert!(tape.slice_cols(a, 2, 4).is_err());
        assert!(tape.concat(a, c).is_err());
    }

    #[test]
    fn backward_of_sum_of_squares() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row(&[1.0, -2.0, 3.0]));
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[2.0, -4.0, 6.0]);
    }

    #[test]
    fn sigmoid_derivative_at_zero() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::row(&[0.5, -1.0]));
        let x = tape.constant(m(2, 1, &[2.0, 1.0]));
        let wx = tape.matmul(w, x).unwrap();
        assert_eq!(tape.value(wx).item(), 0.0);
        let s = tape.sigmoid(wx);
        let loss = tape.sum(s);
        let g = tape.backward(loss).unwrap();
        // d sigma(w.x)/dw = sigma'(0) x = 0.25 x
        assert_eq!(g.get(w).unwrap().data(), &[0.5, 0.25]);
    }

    #[test]
    fn backward_errors() {
        let tape = Tape::new();
        assert!(matches!(tape.backward(Var(0)), Err(Error::EmptyTape)));

        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row(&[1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss(_))));

        let mut tape = Tape::without_recording();
        let x = tape.leaf(Tensor::scalar(1.0));
        assert!(matches!(tape.backward(x), Err(Error::NotRecording)));
    }

    #[test]
    fn sum_and_mean_gradients_are_constant() {
        let mut tape = Tape::new();
        let x = tape.leaf(m(2, 3, &[0.3, -1.0, 2.0, 4.0, 5.0, -6.0]));
        let s = tape.sum(x);
        let g = tape.backward(s).unwrap();
        assert!(g.get(x).unwrap().data().iter().all(|&v| v == 1.0));
        let mu = tape.mean(x);
        let g = tape.backward(mu).unwrap();
        assert!(g.get(x).unwrap().data().iter().all(|&v| v == 1.0 / 6.0));
    }

    #[test]
    fn constants_receive_no_gradient_and_unreached_leaves_get_zeros() {
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::row(&[1.0, 2.0]));
        let unused = tape.leaf(Tensor::row(&[3.0]));
        let w = tape.leaf(Tensor::row(&[0.5, 0.5]));
        let p = tape.mul(c, w).unwrap();
        let loss = tape.sum(p);
        let g = tape.backward(loss).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(unused).unwrap().data(), &[0.0]);
        assert_eq!(g.get(w).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn numerically_stable_primitives() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(&[-1000.0, 0.0, 1000.0]));
        let sp = tape.softplus(x);
        let sg = tape.sigmoid(x);
        assert_eq!(tape.value(sp).data(), &[0.0, 2f64.ln(), 1000.0]);
        assert_eq!(tape.value(sg).data(), &[0.0, 0.5, 1.0]);
        let e = tape.elu(x);
        assert_eq!(tape.value(e).data(), &[-1.0, 0.0, 1000.0]);
    }

    #[test]
    fn gradcheck_quadratic_is_exact() {
        let mut params = ParamSet::new();
        params.push("w", Tensor::row(&[0.3, -1.2, 2.5, 0.7]));
        let report = finite_diff_check(
            |tape, b| {
                let sq = tape.square(b.var(0));
                Ok(tape.sum(sq))
            },
            &params,
            1e-5,
            1e-8,
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.checked, 4);
    }

    #[test]
    fn gradcheck_constant_function() {
        let mut params = ParamSet::new();
        params.push("w", Tensor::row(&[0.3, -1.2]));
        let report = finite_diff_check(
            |tape, b| {
                let z = tape.scale(b.var(0), 0.0);
                let s = tape.sum(z);
                Ok(tape.add_scalar(s, 3.0))
            },
            &params,
            1e-5,
            1e-8,
        )
        .unwrap();
        assert_eq!(report.max_rel_error, 0.0);
        assert_eq!(report.analytic, 0.0);
        assert_eq!(report.numeric, 0.0);
    }

    #[test]
    fn gradcheck_reports_non_finite_probe() {
        let mut params = ParamSet::new();
        params.push("w", Tensor::row(&[0.0]));
        let err = finite_diff_check(
            |tape, b| {
                let l = tape.log(b.var(0));
                Ok(tape.sum(l))
            },
            &params,
            1e-5,
            1e-4,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFiniteProbe { ref param, index: 0, .. } if param == "w"), "{err}");
        assert!(finite_diff_check(|t, b| Ok(t.sum(b.var(0))), &params, 0.0, 1e-4).is_err());
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, positive: bool) -> Tensor {
        let data = (0..r * c)
            .map(|_| {
                let v: f64 = rng.sample(StandardNormal);
                if positive {
                    0.2 + v.abs()
                } else if v.abs() < 1e-3 {
                    // keep away from the kinks of relu/elu/clamp
                    v + 0.01
                } else {
                    v
                }
            })
            .collect();
        Tensor::matrix(r, c, data).unwrap()
    }

    /// Every primitive, 100 randomized trials each: tape gradients agree with
    /// central differences to 1e-4 relative error.
    #[test]
    fn every_primitive_matches_finite_differences() {
        type Build = fn(&mut Tape, &Bound) -> crate::error::Result<Var>;
        // (name, shapes of the params, positive inputs, builder producing a non-scalar result)
        let cases: Vec<(&str, Vec<[usize; 2]>, bool, Build)> = vec![
            ("matmul", vec![[3, 4], [4, 2]], false, |t, b| t.matmul(b.var(0), b.var(1))),
            ("add", vec![[3, 2], [3, 2]], false, |t, b| t.add(b.var(0), b.var(1))),
            ("sub", vec![[3, 2], [3, 2]], false, |t, b| t.sub(b.var(0), b.var(1))),
            ("mul", vec![[3, 2], [3, 2]], false, |t, b| t.mul(b.var(0), b.var(1))),
            ("add_row", vec![[3, 2], [1, 2]], false, |t, b| t.add_row(b.var(0), b.var(1))),
            ("sum", vec![[3, 2]], false, |t, b| Ok(t.sum(b.var(0)))),
            ("mean", vec![[3, 2]], false, |t, b| Ok(t.mean(b.var(0)))),
            ("sum_rows", vec![[3, 4]], false, |t, b| t.sum_rows(b.var(0))),
            ("exp", vec![[3, 2]], false, |t, b| Ok(t.exp(b.var(0)))),
            ("log", vec![[3, 2]], true, |t, b| Ok(t.log(b.var(0)))),
            ("tanh", vec![[3, 2]], false, |t, b| Ok(t.tanh(b.var(0)))),
            ("relu", vec![[3, 2]], false, |t, b| Ok(t.relu(b.var(0)))),
            ("elu", vec![[3, 2]], false, |t, b| Ok(t.elu(b.var(0)))),
            ("sigmoid", vec![[3, 2]], false, |t, b| Ok(t.sigmoid(b.var(0)))),
            ("softplus", vec![[3, 2]], false, |t, b| Ok(t.softplus(b.var(0)))),
            ("square", vec![[3, 2]], false, |t, b| Ok(t.square(b.var(0)))),
            ("negate", vec![[3, 2]], false, |t, b| Ok(t.neg(b.var(0)))),
            ("sqrt", vec![[3, 2]], true, |t, b| Ok(t.sqrt(b.var(0)))),
            ("scale", vec![[3, 2]], false, |t, b| Ok(t.scale(b.var(0), -1.7))),
            ("add_scalar", vec![[3, 2]], false, |t, b| Ok(t.add_scalar(b.var(0), 0.3))),
            ("clamp", vec![[3, 2]], false, |t, b| Ok(t.clamp(b.var(0), -0.5, 0.5))),
            ("concat", vec![[3, 2], [3, 1]], false, |t, b| t.concat(b.var(0), b.var(1))),
            ("slice", vec![[3, 4]], false, |t, b| t.slice_cols(b.var(0), 1, 3)),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (name, shapes, positive, build) in cases {
            for trial in 0..100 {
                let mut params = ParamSet::new();
                for (i, s) in shapes.iter().enumerate() {
                    params.push(format!("in{i}"), random_matrix(&mut rng, s[0], s[1], positive));
                }
                // Contract the output against fixed random weights so every
                // output component contributes to the scalar.
                let probe = {
                    let mut tape = Tape::without_recording();
                    let b = tape.bind(&params);
                    let out = build(&mut tape, &b).unwrap();
                    let s = tape.shape(out).to_vec();
                    random_matrix(&mut rng, s[0], s[1], false)
                };
                let report = finite_diff_check(
                    |tape, b| {
                        let out = build(tape, b)?;
                        let w = tape.constant(probe.clone());
                        let p = tape.mul(out, w)?;
                        Ok(tape.sum(p))
                    },
                    &params,
                    1e-5,
                    1e-4,
                )
                .unwrap();
                assert!(report.passed(), "{name} trial {trial}: {report:?}");
            }
        }
    }

    #[test]
    fn recording_does_not_change_forward_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 5, 4, false);
        let w = random_matrix(&mut rng, 4, 3, false);
        let bias = random_matrix(&mut rng, 1, 3, false);
        let run = |tape: &mut Tape| {
            let x = tape.constant(a.clone());
            let wv = tape.leaf(w.clone());
            let bv = tape.leaf(bias.clone());
            let h = tape.matmul(x, wv).unwrap();
            let h = tape.add_row(h, bv).unwrap();
            let h = tape.elu(h);
            let s = tape.softplus(h);
            let l = tape.log(s);
            let l = tape.tanh(l);
            let r = tape.sum_rows(l).unwrap();
            tape.value(r).clone()
        };
        let with = run(&mut Tape::new());
        let without = run(&mut Tape::without_recording());
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&with), bits(&without));
    }
}
