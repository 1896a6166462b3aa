//! Mini-batch SGD with dev-set model selection.

use std::io::Write;

use eegcn_core::corpus::{make_batches, Encoded, Span, TagSet};
use eegcn_core::eval::{score, ScoreReport};
use eegcn_core::model::{argmax_rows, Model};
use eegcn_core::numkit::{ParamStore, Tape};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// One line of the metrics log. Epoch 0 is the untrained model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sentence training objective over the epoch (dropout on).
    pub train_loss: Option<f64>,
    /// Mean per-sentence loss on dev in inference mode.
    pub dev_loss: f64,
    pub dev_precision: f64,
    pub dev_recall: f64,
    pub dev_f1: f64,
    pub dev_identification_f1: f64,
    pub clamped: usize,
}

#[derive(Clone, Debug)]
pub struct TrainState {
    pub epoch: usize,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
    pub best_params: ParamStore,
    pub seed: u64,
    pub history: Vec<EpochRecord>,
}

/// Predictions and scores on one split.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub report: ScoreReport,
    /// Mean per-sentence loss.
    pub loss: f64,
    pub predicted: Vec<Vec<Span>>,
}

/// Gold spans of each sentence.
pub fn gold_spans(tags: &TagSet, data: &[Encoded]) -> Vec<Vec<Span>> {
    data.iter().map(|e| tags.decode(&e.gold)).collect()
}

/// Inference-mode predictions, loss and scores over `data`.
pub fn evaluate(model: &Model, tags: &TagSet, data: &[Encoded]) -> Result<Evaluation> {
    let c = &model.config;
    let mut predicted = vec![Vec::new(); data.len()];
    let mut loss = 0.0;
    for batch in make_batches(data, c.batch_size, c.max_len, None) {
        let mut tape = Tape::new(&model.params);
        let (fwd, lv) = model.loss(&mut tape, &batch, None)?;
        loss += tape.value(lv.total).data()[0];
        for (row, ids) in argmax_rows(tape.value(fwd.probs), &batch).into_iter().enumerate() {
            predicted[batch.source[row]] = tags.decode(&ids);
        }
    }
    let report = score(&gold_spans(tags, data), &predicted)?;
    Ok(Evaluation {
        report,
        loss: loss / data.len().max(1) as f64,
        predicted,
    })
}

fn record(epoch: usize, train_loss: Option<f64>, ev: &Evaluation, clamped: usize) -> EpochRecord {
    let c = &ev.report.classification;
    EpochRecord {
        epoch,
        train_loss,
        dev_loss: ev.loss,
        dev_precision: c.precision(),
        dev_recall: c.recall(),
        dev_f1: c.f1(),
        dev_identification_f1: ev.report.identification.f1(),
        clamped,
    }
}

/// One SGD step on `batch`. The objective is the bias loss divided by the
/// number of sentences; returns it with the number of clamped probabilities.
pub fn train_step(model: &mut Model, batch: &eegcn_core::corpus::Batch, rng: &mut dyn RngCore) -> Result<(f64, usize)> {
    let (grads, value, clamped) = {
        let mut tape = Tape::new(&model.params);
        let (_, lv) = model.loss(&mut tape, batch, Some(rng))?;
        let objective = tape.scale(lv.total, 1.0 / batch.size as f64);
        let value = tape.value(objective).data()[0];
        if !value.is_finite() {
            let culprit = tape.first_non_finite().unwrap_or_else(|| "loss".into());
            return Err(Error::Aborted(format!("non-finite loss; first non-finite tensor: {culprit}")));
        }
        (tape.backward(objective)?, value, lv.clamped)
    };
    let c = &model.config;
    model.params.accumulate(grads);
    if c.clip_norm > 0.0 {
        model.params.clip_grad_norm(c.clip_norm);
    }
    model.params.sgd_step(c.lr, c.l2)?;
    Ok((value, clamped))
}

/// Trains `model` in place and leaves it holding the best dev-F1 parameters.
/// Each epoch's record is written to `log` as one JSON line.
pub fn train(
    model: &mut Model,
    tags: &TagSet,
    train: &[Encoded],
    dev: &[Encoded],
    seed: u64,
    mut log: Option<&mut dyn Write>,
) -> Result<TrainState> {
    if train.is_empty() {
        return Err(Error::Usage("training split is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let ev = evaluate(model, tags, dev)?;
    let mut state = TrainState {
        epoch: 0,
        best_epoch: 0,
        best_dev_f1: ev.report.classification.f1(),
        best_params: model.params.clone(),
        seed,
        history: Vec::new(),
    };
    let mut emit = |rec: EpochRecord, state: &mut TrainState| -> Result<()> {
        if let Some(w) = log.as_deref_mut() {
            let line = serde_json::to_string(&rec).map_err(|e| Error::Format(e.to_string()))?;
            writeln!(w, "{line}").map_err(|e| Error::io("metrics log", e))?;
        }
        state.history.push(rec);
        Ok(())
    };
    emit(record(0, None, &ev, 0), &mut state)?;

    let c = model.config.clone();
    let mut stale = 0;
    for epoch in 1..=c.max_epochs {
        let order_seed = rng.next_u64();
        let mut total = 0.0;
        let mut clamped = 0;
        for batch in make_batches(train, c.batch_size, c.max_len, Some(order_seed)) {
            let (value, k) = train_step(model, &batch, &mut rng)?;
            total += value * batch.size as f64;
            clamped += k;
        }
        let ev = evaluate(model, tags, dev)?;
        let f1 = ev.report.classification.f1();
        state.epoch = epoch;
        emit(record(epoch, Some(total / train.len() as f64), &ev, clamped), &mut state)?;
        log::info!("epoch {epoch}: dev F1 {f1:.4}");
        if f1 > state.best_dev_f1 {
            state.best_dev_f1 = f1;
            state.best_epoch = epoch;
            state.best_params = model.params.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= c.patience {
                break;
            }
        }
    }
    model.params = state.best_params.clone();
    Ok(state)
}
