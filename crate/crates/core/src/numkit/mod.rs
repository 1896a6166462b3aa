//! Dense `f64` tensors with tape-based reverse-mode differentiation.

mod gemm;
mod params;
mod tape;
mod tensor;

pub use params::{Gradients, Param, ParamId, ParamStore};
pub use tape::{Tape, Var, IGNORE, PROB_EPSILON};
pub use tensor::Tensor;


#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn identity_matmul() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let i = tape.constant(Tensor::eye(2));
        let b = tape.constant(t(&[2, 3], &[1., 2., 3., 4., 5., 6.]));
        let c = tape.matmul(i, b).unwrap();
        assert_eq!(tape.value(c), tape.value(b));
    }

    #[test]
    fn hand_matmul() {
        let a = t(&[2, 2], &[1., 2., 3., 4.]);
        let b = t(&[2, 1], &[0., 1.]);
        assert_eq!(a.matmul(&b).unwrap(), t(&[2, 1], &[2., 4.]));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        let err = tape.matmul(a, b).unwrap_err();
        assert_eq!(
            err,
            crate::Error::Dimension {
                op: "matmul",
                lhs: vec![2, 3],
                rhs: vec![2, 3]
            }
        );
    }

    #[test]
    fn concat_shapes() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let a = tape.constant(Tensor::zeros(&[2]));
        let b = tape.constant(Tensor::zeros(&[3]));
        let c = tape.concat(&[a, b], 0).unwrap();
        assert_eq!(tape.shape(c), &[5]);
        let single = tape.concat(&[b], 0).unwrap();
        assert_eq!(tape.value(single), tape.value(b));
        let m = tape.constant(Tensor::zeros(&[2, 2]));
        assert!(tape.concat(&[a, m], 0).is_err());
        assert!(tape.concat(&[], 0).is_err());
    }

    #[test]
    fn concat_inner_axis_layout() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let a = tape.constant(t(&[2, 1], &[1., 2.]));
        let b = tape.constant(t(&[2, 2], &[3., 4., 5., 6.]));
        let c = tape.concat(&[a, b], 1).unwrap();
        assert_eq!(tape.value(c), &t(&[2, 3], &[1., 3., 4., 2., 5., 6.]));
        let back = tape.narrow(c, 1, 1, 2).unwrap();
        assert_eq!(tape.value(back), tape.value(b));
    }

    #[test]
    fn mean_pool_cases() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.constant(t(&[2, 2], &[1., -2., 3., 0.5]));
        let same = tape.mean_pool(&[x, x, x]).unwrap();
        assert_eq!(tape.value(same), tape.value(x));
        let neg = tape.scale(x, -1.0);
        let zero = tape.mean_pool(&[x, neg]).unwrap();
        assert!(tape.value(zero).data().iter().all(|&v| v == 0.0));
        assert!(matches!(tape.mean_pool(&[]), Err(crate::Error::Argument(_))));
    }

    #[test]
    fn relu_and_softmax() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.constant(t(&[2], &[-3., 2.]));
        let r = tape.relu(x);
        assert_eq!(tape.value(r).data(), &[0., 2.]);
        let z = tape.constant(Tensor::zeros(&[1, 2]));
        let s = tape.softmax(z).unwrap();
        assert_eq!(tape.value(s).data(), &[0.5, 0.5]);
        let big = tape.constant(t(&[2, 3], &[1000., 0., -1000., 3., 2., 1.]));
        let s = tape.softmax(big).unwrap();
        for row in tape.value(s).data().chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dropout_rates() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = tape.constant(Tensor::full(&[1000], 1.0));
        let same = tape.dropout(x, 0.0, &mut rng).unwrap();
        assert_eq!(tape.value(same), tape.value(x));
        assert!(tape.dropout(x, 1.0, &mut rng).is_err());
        assert!(tape.dropout(x, -0.1, &mut rng).is_err());
        let d = tape.dropout(x, 0.6, &mut rng).unwrap();
        let vals = tape.value(d).data();
        assert!(vals.iter().all(|&v| v == 0.0 || (v - 2.5).abs() < 1e-12));
        let kept = vals.iter().filter(|&&v| v > 0.0).count();
        assert!((330..470).contains(&kept), "kept {kept}");
    }

    #[test]
    fn parameter_used_twice_accumulates() {
        // f(w) = w·w + 3w at w = 2  →  f'(w) = 2w + 3 = 7
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::full(&[1], 2.0)).unwrap();
        let mut tape = Tape::new(&store);
        let a = tape.param(id);
        let b = tape.param(id);
        let sq = tape.mul(a, b).unwrap();
        let lin = tape.scale(a, 3.0);
        let f = tape.add(sq, lin).unwrap();
        let grads = tape.backward(f).unwrap();
        assert_eq!(grads.get(id).unwrap(), &[7.0]);
    }

    #[test]
    fn sgd_on_square() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::full(&[1], 1.0)).unwrap();
        let grads = {
            let mut tape = Tape::new(&store);
            let w = tape.param(id);
            let f = tape.mul(w, w).unwrap();
            tape.backward(f).unwrap()
        };
        store.accumulate(grads);
        store.sgd_step(0.1, 0.0).unwrap();
        assert!((store.value(id).data()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::zeros(&[2]));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn non_finite_is_reported() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.constant(t(&[2], &[1.0, 0.0]));
        assert!(tape.first_non_finite().is_none());
        let y = tape.scale(x, f64::INFINITY);
        let _ = tape.relu(y);
        let msg = tape.first_non_finite().unwrap();
        assert!(msg.contains("scale"), "{msg}");
    }
}
