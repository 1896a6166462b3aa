#![allow(dead_code)]

use eegcn_core::corpus::{Batch, Encoder, Sentence, Trigger};
use eegcn_core::model::{Model, ModelConfig, ModelDims};
use eegcn_core::numkit::{ParamStore, Tape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

/// Two short parsed sentences (lengths 4 and 3) with one event type.
pub fn tiny_sentences() -> Vec<Sentence> {
    vec![
        Sentence::from_wire(
            words("putin visited bush ."),
            words("B-PER O B-PER O"),
            &[2, 0, 2, 2],
            words("nsubj root dobj punct"),
            vec![Trigger::new(1, 2, "Meet")],
        )
        .unwrap(),
        Sentence::from_wire(
            words("they met ."),
            words("O O O"),
            &[2, 0, 2],
            words("nsubj root punct"),
            vec![Trigger::new(1, 2, "Meet")],
        )
        .unwrap(),
    ]
}

pub fn tiny_encoder() -> Encoder {
    Encoder::fit(&tiny_sentences(), &[]).unwrap()
}

pub fn tiny_batch() -> Batch {
    let enc = tiny_encoder();
    let rows = enc.encode_all(&tiny_sentences()).unwrap();
    Batch::from_encoded(&rows.iter().collect::<Vec<_>>(), 50)
}

pub fn dims(enc: &Encoder) -> ModelDims {
    ModelDims {
        words: enc.words.len(),
        entities: enc.entities.len(),
        relations: enc.edges.len(),
        tags: enc.tags.len(),
    }
}

/// n ≤ 4, d = 6, p = 3, L = 2, T = 3.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        word_dim: 4,
        entity_dim: 2,
        edge_dim: 3,
        lstm_hidden: 3,
        gcn_hidden: 6,
        layers: 2,
        ..ModelConfig::default()
    }
}

pub fn tiny_model(config: ModelConfig, seed: u64) -> Model {
    let enc = tiny_encoder();
    Model::new(config, dims(&enc), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

/// Bias loss of `model` on `batch`; with `dropout_seed` a freshly seeded
/// generator drives dropout so repeated calls see the same masks.
pub fn loss_value(model: &Model, params: &ParamStore, batch: &Batch, dropout_seed: Option<u64>) -> f64 {
    let mut tape = Tape::new(params);
    let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
    let r = rng.as_mut().map(|r| r as &mut dyn rand::RngCore);
    let (_, lv) = model.loss(&mut tape, batch, r).unwrap();
    tape.value(lv.total).data()[0]
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-12 {
        0.0
    } else {
        diff / scale
    }
}
