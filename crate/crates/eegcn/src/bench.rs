//! Throughput of the three graph encoders on identical batches.

use std::fmt::Write as _;
use std::time::Instant;

use eegcn_core::corpus::{make_batches, Encoder, Encoded};
use eegcn_core::model::Baseline;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::build_model;
use crate::error::{Error, Result};
use crate::settings::Settings;
use crate::train::train_step;

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub baseline: String,
    pub batches: usize,
    pub train_batches_per_sec: f64,
    pub inference_batches_per_sec: f64,
}

/// Times `batches` training steps and `batches` inference passes per
/// encoder after `warmup` untimed passes of each.
pub fn run(settings: &Settings, encoder: &Encoder, data: &[Encoded], batches: usize, warmup: usize) -> Result<Vec<BenchRow>> {
    let pool = make_batches(data, settings.model.batch_size, settings.model.max_len, None);
    if pool.is_empty() || batches == 0 {
        return Err(Error::Usage("bench needs at least one batch".into()));
    }
    let pick = |i: usize| &pool[i % pool.len()];
    let mut rows = Vec::new();
    for baseline in [Baseline::Gcn, Baseline::Rgcn, Baseline::EeGcn] {
        let mut s = settings.clone();
        s.model.baseline = baseline;
        let (mut model, _) = build_model(&s, encoder)?;

        for i in 0..warmup {
            model.predict(pick(i))?;
        }
        let t = Instant::now();
        for i in 0..batches {
            model.predict(pick(i))?;
        }
        let inference = batches as f64 / t.elapsed().as_secs_f64();

        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        for i in 0..warmup {
            train_step(&mut model, pick(i), &mut rng)?;
        }
        let t = Instant::now();
        for i in 0..batches {
            train_step(&mut model, pick(i), &mut rng)?;
        }
        let train = batches as f64 / t.elapsed().as_secs_f64();
        rows.push(BenchRow {
            baseline: baseline.as_str().to_string(),
            batches,
            train_batches_per_sec: train,
            inference_batches_per_sec: inference,
        });
    }
    Ok(rows)
}

pub fn table(rows: &[BenchRow]) -> String {
    let mut out = String::from("baseline  train_bat/s  infer_bat/s\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<8}  {:>11.2}  {:>11.2}",
            r.baseline, r.train_batches_per_sec, r.inference_batches_per_sec
        );
    }
    out
}
