//! Minimal reverse-mode differentiation over small dense `f64` matrices.
//!
//! A [`Tape`] is built fresh for every forward pass. Parameters enter the
//! tape by copy from a [`ParamStore`]; [`Tape::backward`] writes their
//! gradients back into the store, where [`Adam`] consumes them.

mod params;
mod tape;
mod tensor;

pub use params::{Adam, Param, ParamId, ParamStore};
pub use tape::{logistic, weighted_bce_value, Gradients, Tape, Var};
pub use tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const LEAKY_RELU_SLOPE: f64 = 0.2;

/// Central-difference gradient checking.
pub mod gradcheck {
    use super::*;

    /// Largest relative error between analytic and central-difference
    /// gradients of `f` with respect to every entry of every input.
    pub fn max_rel_error(inputs: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> Var) -> f64 {
        let eps = 1e-4;
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
        let loss = f(&mut tape, &vars);
        let mut scratch = ParamStore::new();
        let grads = tape.backward(loss, &mut scratch).unwrap();

        let eval = |perturbed: &[Tensor]| {
            let mut t = Tape::new();
            let vs: Vec<Var> = perturbed.iter().map(|x| t.input(x.clone())).collect();
            let l = f(&mut t, &vs);
            t.value(l).item().unwrap()
        };

        let mut worst: f64 = 0.0;
        for (k, input) in inputs.iter().enumerate() {
            let analytic = grads.get(vars[k]).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; input.numel()]);
            for i in 0..input.numel() {
                let bump = |delta: f64| {
                    let mut all = inputs.to_vec();
                    let mut vals = all[k].values().to_vec();
                    vals[i] += delta;
                    all[k] = Tensor::new(input.shape().to_vec(), vals).unwrap();
                    eval(&all)
                };
                let numeric = (bump(eps) - bump(-eps)) / (2.0 * eps);
                let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
                worst = worst.max((analytic[i] - numeric).abs() / denom);
            }
        }
        worst
    }

    /// Same check over every entry of every parameter in `store`; `f` builds
    /// the scalar loss on a fresh tape from the store it is given.
    pub fn params_max_rel_error(store: &ParamStore, f: impl Fn(&mut Tape, &ParamStore) -> Var) -> f64 {
        let eps = 1e-4;
        let mut analytic = store.clone();
        analytic.zero_grad();
        let mut tape = Tape::new();
        let loss = f(&mut tape, &analytic);
        tape.backward(loss, &mut analytic).unwrap();

        let eval = |s: &ParamStore| {
            let mut t = Tape::new();
            let l = f(&mut t, s);
            t.value(l).item().unwrap()
        };
        let mut probe = store.clone();
        let mut worst: f64 = 0.0;
        for (id, param) in analytic.iter() {
            let base = param.value.values().to_vec();
            for i in 0..base.len() {
                let mut v = base.clone();
                v[i] = base[i] + eps;
                probe.set_values(id, v.clone()).unwrap();
                let up = eval(&probe);
                v[i] = base[i] - eps;
                probe.set_values(id, v).unwrap();
                let down = eval(&probe);
                let numeric = (up - down) / (2.0 * eps);
                let denom = param.grad[i].abs().max(numeric.abs()).max(1e-6);
                worst = worst.max((param.grad[i] - numeric).abs() / denom);
            }
            probe.set_values(id, base).unwrap();
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::gradcheck::max_rel_error;
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        // keep entries away from the relu/leaky-relu kink
        let vals = (0..r * c)
            .map(|_| {
                let v: f64 = rng.gen_range(0.1..1.5);
                if rng.gen_bool(0.5) { v } else { -v }
            })
            .collect();
        Tensor::matrix(r, c, vals).unwrap()
    }

    /// Contracts an op's output against a fixed random weight so that every
    /// output entry contributes to a scalar loss.
    fn project(tape: &mut Tape, out: Var, seed: u64) -> Var {
        let (r, c) = tape.value(out).dims2().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = tape.input(rand_matrix(&mut rng, r, c));
        let prod = tape.mul(out, w).unwrap();
        tape.sum(prod).unwrap()
    }

    fn check(inputs: Vec<Tensor>, f: impl Fn(&mut Tape, &[Var]) -> Var) {
        let err = max_rel_error(&inputs, f);
        assert!(err < 1e-4, "max relative gradient error {err}");
    }

    #[test]
    fn gradcheck_every_op_kind() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = rand_matrix(&mut rng, 3, 4);
        let b = rand_matrix(&mut rng, 4, 2);
        let row = rand_matrix(&mut rng, 1, 4);
        let col = rand_matrix(&mut rng, 3, 1);
        let same = rand_matrix(&mut rng, 3, 4);
        let pos = Tensor::matrix(2, 2, vec![0.3, 1.7, 0.9, 2.4]).unwrap();

        check(vec![a.clone(), b.clone()], |t, v| {
            let o = t.matmul(v[0], v[1]).unwrap();
            project(t, o, 1)
        });
        check(vec![a.clone(), row.clone()], |t, v| {
            let o = t.add(v[0], v[1]).unwrap();
            project(t, o, 2)
        });
        check(vec![a.clone(), same.clone()], |t, v| {
            let o = t.add(v[0], v[1]).unwrap();
            project(t, o, 3)
        });
        check(vec![a.clone(), col.clone()], |t, v| {
            let o = t.mul(v[0], v[1]).unwrap();
            project(t, o, 4)
        });
        check(vec![a.clone()], |t, v| {
            let o = t.scale(v[0], -1.7).unwrap();
            project(t, o, 5)
        });
        check(vec![a.clone(), same.clone()], |t, v| {
            let o = t.concat_cols(&[v[0], v[1]]).unwrap();
            project(t, o, 6)
        });
        check(vec![a.clone()], |t, v| {
            let o = t.leaky_relu(v[0], LEAKY_RELU_SLOPE).unwrap();
            project(t, o, 7)
        });
        check(vec![a.clone()], |t, v| {
            let o = t.relu(v[0]).unwrap();
            project(t, o, 8)
        });
        check(vec![a.clone(), row.clone(), rand_matrix(&mut rng, 1, 4)], |t, v| {
            let o = t.layer_norm(v[0], v[1], v[2], LAYER_NORM_EPS).unwrap();
            project(t, o, 9)
        });
        check(vec![a.clone()], |t, v| {
            let o = t.softmax_groups(v[0], &[0, 0, 1, 1, 1, 2, 2, 0, 1, 2, 2, 0]).unwrap();
            project(t, o, 10)
        });
        check(vec![a.clone()], |t, v| {
            let o = t.sigmoid(v[0]).unwrap();
            project(t, o, 11)
        });
        check(vec![pos], |t, v| {
            let o = t.log(v[0]).unwrap();
            project(t, o, 12)
        });
        check(vec![a.clone()], |t, v| {
            let o = t.mean_rows(v[0]).unwrap();
            project(t, o, 13)
        });
        check(vec![a.clone()], |t, v| {
            let o = t.gather_rows(v[0], &[2, 0, 0, 1, 2]).unwrap();
            project(t, o, 14)
        });
        check(vec![a.clone()], |t, v| {
            let o = t.segment_sum(v[0], &[1, 0, 1], 3).unwrap();
            project(t, o, 15)
        });
        check(vec![a.clone()], |t, v| {
            let o = t.reshape(v[0], vec![6, 2]).unwrap();
            project(t, o, 16)
        });
        check(vec![a.clone()], |t, v| {
            let targets = [1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0];
            let o = t.weighted_bce(v[0], &targets, 3.5).unwrap();
            project(t, o, 17)
        });
        check(vec![a], |t, v| t.sum(v[0]).unwrap());
    }

    #[test]
    fn gradient_accumulates_across_fan_out() {
        // loss = sum(x ⊙ x) reuses x twice, so d/dx = 2x
        let mut tape = Tape::new();
        let x = tape.input(Tensor::matrix(1, 3, vec![1.0, -2.0, 0.5]).unwrap());
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq).unwrap();
        let g = tape.backward(loss, &mut ParamStore::new()).unwrap();
        assert_eq!(g.get(x).unwrap(), &[2.0, -4.0, 1.0]);
    }

    #[test]
    fn linear_loss_gradient_is_the_input() {
        let mut store = ParamStore::new();
        let w = store.insert("w", Tensor::matrix(1, 3, vec![0.1, 0.2, 0.3]).unwrap()).unwrap();
        let mut tape = Tape::new();
        let wv = tape.param(&store, w);
        let x = tape.input(Tensor::matrix(1, 3, vec![4.0, -5.0, 6.0]).unwrap());
        let p = tape.mul(wv, x).unwrap();
        let loss = tape.sum(p).unwrap();
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(w), &[4.0, -5.0, 6.0]);
    }

    #[test]
    fn sigmoid_slope_at_zero_is_a_quarter() {
        let mut tape = Tape::new();
        let z = tape.input(Tensor::scalar(0.0).unwrap());
        let s = tape.sigmoid(z).unwrap();
        let g = tape.backward(s, &mut ParamStore::new()).unwrap();
        assert_eq!(g.get(z).unwrap(), &[0.25]);
    }

    #[test]
    fn relu_definition() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::matrix(1, 3, vec![-1.0, 0.0, 2.0]).unwrap());
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.value(y).values(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn layer_norm_of_one_three() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::matrix(1, 2, vec![1.0, 3.0]).unwrap());
        let g = tape.input(Tensor::matrix(1, 2, vec![1.0, 1.0]).unwrap());
        let b = tape.input(Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap());
        let y = tape.layer_norm(x, g, b, 0.0).unwrap();
        assert_eq!(tape.value(y).values(), &[-1.0, 1.0]);
    }

    #[test]
    fn non_scalar_loss_is_a_contract_error() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::matrix(1, 2, vec![1.0, 3.0]).unwrap());
        let err = tape.backward(x, &mut ParamStore::new()).unwrap_err();
        assert!(matches!(err, crate::Error::Contract(_)));
    }

    #[test]
    fn shape_mismatch_and_non_finite_outputs_are_rejected() {
        let mut tape = Tape::new();
        let a = tape.input(Tensor::matrix(2, 3, vec![1.0; 6]).unwrap());
        let b = tape.input(Tensor::matrix(2, 3, vec![1.0; 6]).unwrap());
        assert!(matches!(tape.matmul(a, b), Err(crate::Error::Dimension(_))));
        let z = tape.input(Tensor::matrix(1, 1, vec![0.0]).unwrap());
        assert!(matches!(tape.log(z), Err(crate::Error::Numeric(_))));
        assert!(matches!(Tensor::new(vec![2], vec![1.0, f64::INFINITY]), Err(crate::Error::Numeric(_))));
        assert!(matches!(Tensor::new(vec![2, 2], vec![1.0]), Err(crate::Error::Dimension(_))));
    }

    proptest! {
        #[test]
        fn softmax_normalizes_and_ignores_constant_shift(
            logits in proptest::collection::vec(-30.0f64..30.0, 1..12),
            shift in -100.0f64..100.0,
        ) {
            let n = logits.len();
            let mut tape = Tape::new();
            let x = tape.input(Tensor::matrix(1, n, logits.clone()).unwrap());
            let shifted = tape.input(Tensor::matrix(1, n, logits.iter().map(|v| v + shift).collect()).unwrap());
            let p = tape.softmax(x).unwrap();
            let q = tape.softmax(shifted).unwrap();
            let total: f64 = tape.value(p).values().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            for (a, b) in tape.value(p).values().iter().zip(tape.value(q).values()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn constant_logits_give_uniform_softmax(c in -50.0f64..50.0, n in 1usize..9) {
            let mut tape = Tape::new();
            let x = tape.input(Tensor::matrix(1, n, vec![c; n]).unwrap());
            let p = tape.softmax(x).unwrap();
            for v in tape.value(p).values() {
                prop_assert!((v - 1.0 / n as f64).abs() < 1e-15);
            }
        }

        #[test]
        fn layer_norm_rows_are_standardized(
            rows in proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 8), 1..5),
        ) {
            let m = rows.len();
            let flat: Vec<f64> = rows.concat();
            // skip near-constant rows, where eps dominates the variance
            for r in &rows {
                let mean = r.iter().sum::<f64>() / 8.0;
                let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
                prop_assume!(var > 1e-2);
            }
            let mut tape = Tape::new();
            let x = tape.input(Tensor::matrix(m, 8, flat).unwrap());
            let g = tape.input(Tensor::matrix(1, 8, vec![1.0; 8]).unwrap());
            let b = tape.input(Tensor::matrix(1, 8, vec![0.0; 8]).unwrap());
            let y = tape.layer_norm(x, g, b, LAYER_NORM_EPS).unwrap();
            for row in tape.value(y).values().chunks(8) {
                let mean = row.iter().sum::<f64>() / 8.0;
                let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
                prop_assert!(mean.abs() < 1e-9);
                // eps shifts the variance by at most eps/var
                prop_assert!((var - 1.0).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn layer_norm_variance_within_1e6_of_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let vals: Vec<f64> = (0..64).map(|_| rng.gen_range(-20.0..20.0)).collect();
        let mut tape = Tape::new();
        let x = tape.input(Tensor::matrix(2, 32, vals).unwrap());
        let g = tape.input(Tensor::matrix(1, 32, vec![1.0; 32]).unwrap());
        let b = tape.input(Tensor::matrix(1, 32, vec![0.0; 32]).unwrap());
        let y = tape.layer_norm(x, g, b, LAYER_NORM_EPS).unwrap();
        for row in tape.value(y).values().chunks(32) {
            let mean = row.iter().sum::<f64>() / 32.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 32.0;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-6, "{var}");
        }
    }
}
