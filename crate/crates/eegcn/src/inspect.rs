//! Edge relevance matrices of a trained EE-GCN.

use std::fmt::Write as _;

use eegcn_core::corpus::{Batch, Encoded};
use eegcn_core::graph::relevance_matrix;
use eegcn_core::model::{Baseline, Model};
use eegcn_core::numkit::{Tape, Tensor};
use serde::Serialize;

use crate::error::{Error, Result};

/// `n × n` relevance of one sentence after `layer` edge updates (`0` is the
/// initial adjacency tensor).
pub fn relevance(model: &Model, sentence: &Encoded, layer: usize) -> Result<Tensor> {
    if model.config.baseline != Baseline::EeGcn {
        return Err(Error::Usage("inspect needs an EE-GCN model".into()));
    }
    if layer > model.config.layers {
        return Err(Error::Usage(format!(
            "layer {layer} out of range 0..={}",
            model.config.layers
        )));
    }
    let batch = Batch::from_encoded(&[sentence], model.config.max_len);
    let mut tape = Tape::new(&model.params);
    let fwd = model.forward(&mut tape, &batch, None, true)?;
    let e = tape.value(fwd.graph.edge_states[layer]).clone();
    let s = e.shape().to_vec();
    relevance_matrix(&e.reshape(&[s[1], s[2], s[3]])?).map_err(Error::from)
}

/// Mean of each column.
pub fn column_means(m: &Tensor) -> Vec<f64> {
    let (rows, cols) = (m.shape()[0], m.shape()[1]);
    (0..cols)
        .map(|j| (0..rows).map(|i| m.get(&[i, j])).sum::<f64>() / rows as f64)
        .collect()
}

/// Header of tokens, then one row of `n` values per token.
pub fn to_csv(tokens: &[String], m: &Tensor) -> String {
    let mut out = tokens.join(",");
    out.push('\n');
    let n = m.shape()[1];
    for row in m.data().chunks(n.max(1)) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

#[derive(Serialize)]
struct JsonMatrix<'a> {
    tokens: &'a [String],
    layer: usize,
    relevance: Vec<&'a [f64]>,
}

pub fn to_json(tokens: &[String], layer: usize, m: &Tensor) -> Result<String> {
    let n = m.shape()[1];
    let doc = JsonMatrix {
        tokens,
        layer,
        relevance: m.data().chunks(n.max(1)).collect(),
    };
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))
}
