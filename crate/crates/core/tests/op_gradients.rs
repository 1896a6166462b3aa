//! Central finite differences against reverse-mode gradients, one op at a time.

mod common;

use common::rel_error;
use eegcn_core::model::lstm_scan;
use eegcn_core::numkit::{ParamId, ParamStore, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-6;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Reduces `out` to a scalar with fixed random weights so the incoming
/// gradient is not uniform.
fn project(tape: &mut Tape<'_>, out: Var) -> Var {
    let n = tape.value(out).numel();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let w = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y = tape.mul_const(out, w).unwrap();
    tape.sum(y)
}

fn loss(store: &ParamStore, f: &dyn Fn(&mut Tape<'_>) -> Var) -> f64 {
    let mut tape = Tape::new(store);
    let out = f(&mut tape);
    let s = project(&mut tape, out);
    tape.value(s).data()[0]
}

fn check(store: &ParamStore, f: &dyn Fn(&mut Tape<'_>) -> Var) {
    let grads = {
        let mut tape = Tape::new(store);
        let out = f(&mut tape);
        let s = project(&mut tape, out);
        tape.backward(s).unwrap()
    };
    for (id, p) in store.iter() {
        let analytic = grads.get(id).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; p.value.numel()]);
        let mut numeric = vec![0.0; p.value.numel()];
        let mut probe = store.clone();
        for k in 0..numeric.len() {
            let x = p.value.data()[k];
            probe.value_mut(id).data_mut()[k] = x + STEP;
            let up = loss(&probe, f);
            probe.value_mut(id).data_mut()[k] = x - STEP;
            let down = loss(&probe, f);
            probe.value_mut(id).data_mut()[k] = x;
            numeric[k] = (up - down) / (2.0 * STEP);
        }
        let e = rel_error(&analytic, &numeric);
        assert!(e < TOL, "{}: rel error {e:.3e}", p.name);
    }
}

fn store(shapes: &[(&str, &[usize])], seed: u64) -> (ParamStore, Vec<ParamId>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new();
    let ids = shapes.iter().map(|(n, sh)| s.add(n, random(sh, &mut rng)).unwrap()).collect();
    (s, ids)
}

#[test]
fn matmul_bmm_and_linear_ops() {
    let (s, id) = store(&[("a", &[3, 4]), ("b", &[4, 2]), ("c", &[3, 2]), ("bias", &[2])], 1);
    check(&s, &|t| {
        let a = t.param(id[0]);
        let b = t.param(id[1]);
        let c = t.param(id[2]);
        let ab = t.matmul(a, b).unwrap();
        let x = t.add(ab, c).unwrap();
        let x = t.mul(x, c).unwrap();
        let x = t.scale(x, 0.7);
        let bias = t.param(id[3]);
        t.add_row(x, bias).unwrap()
    });
    let (s, id) = store(&[("a", &[2, 3, 3]), ("b", &[2, 3, 4])], 2);
    check(&s, &|t| {
        let a = t.param(id[0]);
        let b = t.param(id[1]);
        t.bmm(a, b).unwrap()
    });
}

#[test]
fn pointwise_nonlinearities() {
    let (mut s, id) = store(&[("x", &[4, 5])], 3);
    // Keep relu inputs away from the kink.
    for v in s.value_mut(id[0]).data_mut() {
        if v.abs() < 0.05 {
            *v += 0.1;
        }
    }
    check(&s, &|t| {
        let x = t.param(id[0]);
        let r = t.relu(x);
        let g = t.sigmoid(x);
        let h = t.tanh(x);
        let a = t.add(r, g).unwrap();
        t.mul(a, h).unwrap()
    });
    check(&s, &|t| {
        let x = t.param(id[0]);
        t.softmax(x).unwrap()
    });
}

#[test]
fn shape_ops() {
    let (s, id) = store(&[("x", &[2, 3, 4]), ("y", &[2, 3, 2])], 4);
    check(&s, &|t| {
        let x = t.param(id[0]);
        let y = t.param(id[1]);
        let c = t.concat(&[x, y], 2).unwrap();
        let n = t.narrow(c, 2, 1, 4).unwrap();
        let r = t.reshape(n, &[6, 4]).unwrap();
        t.gather(r, vec![Some(5), None, Some(0), Some(0), Some(3)]).unwrap()
    });
    let (s, id) = store(&[("table", &[5, 3])], 5);
    check(&s, &|t| t.embed(id[0], vec![Some(1), Some(4), None, Some(1)]).unwrap());
}

#[test]
fn pooling_and_pair_ops() {
    let (s, id) = store(&[("e", &[2, 3, 3, 4]), ("r", &[2, 3, 4]), ("c", &[2, 3, 4])], 6);
    check(&s, &|t| {
        let e = t.param(id[0]);
        t.mean_last_axis(e).unwrap()
    });
    check(&s, &|t| {
        let r = t.param(id[1]);
        let c = t.param(id[2]);
        let p = t.pair_sum(r, c).unwrap();
        let e = t.param(id[0]);
        let x = t.add(p, e).unwrap();
        t.mean_pool(&[x, e, x]).unwrap()
    });
}

#[test]
fn dropout_with_fixed_mask() {
    let (s, id) = store(&[("x", &[6, 5])], 7);
    check(&s, &|t| {
        let x = t.param(id[0]);
        t.dropout(x, 0.4, &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
    });
}

#[test]
fn weighted_nll() {
    let (s, id) = store(&[("logits", &[4, 3])], 8);
    let f = |t: &mut Tape<'_>| {
        let x = t.param(id[0]);
        let p = t.softmax(x).unwrap();
        t.weighted_nll(p, vec![0, 2, 1, 0], vec![1.0, 5.0, 5.0, 0.0]).unwrap()
    };
    check(&s, &f);
}

#[test]
fn fused_lstm_matches_composed_recurrence() {
    let (s, id) = store(&[("pre", &[2, 5, 12]), ("w_hh", &[3, 12])], 9);
    check(&s, &|t| {
        let pre = t.param(id[0]);
        let w = t.param(id[1]);
        t.lstm(pre, w).unwrap()
    });
    let mut tape = Tape::new(&s);
    let pre = tape.param(id[0]);
    let w = tape.param(id[1]);
    let fused = tape.lstm(pre, w).unwrap();
    let scan = lstm_scan(&mut tape, pre, w, 3).unwrap();
    let (a, b) = (tape.value(fused), tape.value(scan));
    assert_eq!(a.shape(), b.shape());
    assert!(a.max_abs_diff(b) < 1e-14);

    let fa = project(&mut tape, fused);
    let ga = tape.backward(fa).unwrap();
    let mut tape = Tape::new(&s);
    let pre = tape.param(id[0]);
    let w = tape.param(id[1]);
    let scan = lstm_scan(&mut tape, pre, w, 3).unwrap();
    let fb = project(&mut tape, scan);
    let gb = tape.backward(fb).unwrap();
    for &p in &id {
        assert!(rel_error(ga.get(p).unwrap(), gb.get(p).unwrap()) < 1e-12);
    }
}
