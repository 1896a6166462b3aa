mod common;

use eegcn_core::numkit::IGNORE;
use eegcn_core::loss::bias_loss;
use eegcn_core::numkit::{ParamStore, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_probs(rows: usize, tags: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = Tensor::from_fn(&[rows, tags], |_| rng.gen_range(0.01..1.0));
    for row in t.data_mut().chunks_mut(tags) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    t
}

fn value(probs: &Tensor, gold: &[usize], alpha: f64) -> f64 {
    let store = ParamStore::new();
    let mut t = Tape::new(&store);
    let p = t.constant(probs.clone());
    let lv = bias_loss(&mut t, p, gold, alpha).unwrap();
    t.value(lv.total).data()[0]
}

#[test]
fn non_negative_and_monotone_in_alpha() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let probs = random_probs(6, 5, &mut rng);
        let mut gold: Vec<usize> = (0..6).map(|_| rng.gen_range(0..5)).collect();
        gold[0] = 3;
        let a = value(&probs, &gold, 1.0);
        let b = value(&probs, &gold, 5.0);
        assert!(a >= 0.0 && b > a);
    }
}

#[test]
fn zero_only_when_certain() {
    let mut p = Tensor::zeros(&[3, 3]);
    for (i, g) in [0usize, 2, 1].iter().enumerate() {
        p.set(&[i, *g], 1.0);
    }
    assert_eq!(value(&p, &[0, 2, 1], 5.0), 0.0);
    let mut q = p.clone();
    q.set(&[1, 2], 0.9);
    q.set(&[1, 0], 0.1);
    assert!(value(&q, &[0, 2, 1], 5.0) > 0.0);
}

#[test]
fn padding_receives_no_gradient() {
    let batch = common::tiny_batch();
    assert!(batch.gold.contains(&IGNORE));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    let rows = batch.gold.len();
    let id = store.add("logits", Tensor::from_fn(&[rows, 3], |_| rng.gen_range(-1.0..1.0))).unwrap();
    let mut t = Tape::new(&store);
    let x = t.param(id);
    let probs = t.softmax(x).unwrap();
    let lv = bias_loss(&mut t, probs, &batch.gold, 5.0).unwrap();
    let g = t.backward(lv.total).unwrap();
    let grads = g.get(id).unwrap();
    for (row, &gold) in batch.gold.iter().enumerate() {
        let r = &grads[row * 3..(row + 1) * 3];
        assert_eq!(gold == IGNORE, r.iter().all(|&v| v == 0.0));
    }
}
