//! Binary checkpoints: `EEGCNCK1`, a little-endian `u64` header length, a
//! JSON header, then every tensor as little-endian `f64`s in header order.

use std::path::Path;

use eegcn_core::corpus::{Encoder, TagSet, Vocab};
use eegcn_core::graph::EdgeVocab;
use eegcn_core::model::{Model, ModelConfig, ModelDims};
use eegcn_core::numkit::{ParamStore, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"EEGCNCK1";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: Vec<(String, String)>,
    dims: [usize; 4],
    seed: u64,
    words: Vec<String>,
    entities: Vec<String>,
    edge_labels: Vec<String>,
    event_types: Vec<String>,
    allow_unk_label: bool,
    tensors: Vec<(String, Vec<usize>)>,
}

pub fn to_bytes(model: &Model, encoder: &Encoder, seed: u64) -> Result<Vec<u8>> {
    let d = &model.dims;
    let header = Header {
        config: model.config.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        dims: [d.words, d.entities, d.relations, d.tags],
        seed,
        words: encoder.words.items().to_vec(),
        entities: encoder.entities.items().to_vec(),
        edge_labels: encoder.edges.labels().to_vec(),
        event_types: encoder.tags.event_types().to_vec(),
        allow_unk_label: encoder.allow_unk_label,
        tensors: model
            .params
            .iter()
            .map(|(_, p)| (p.name.clone(), p.value.shape().to_vec()))
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + json.len() + 8 * model.params.num_scalars());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, p) in model.params.iter() {
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// A restored model with its vocabularies and training seed.
#[derive(Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub encoder: Encoder,
    pub seed: u64,
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |m: &str| Error::Format(format!("checkpoint: {m}"));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("bad magic"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[16..];
    if body.len() < len {
        return Err(bad("truncated header"));
    }
    let header: Header = serde_json::from_slice(&body[..len]).map_err(|e| bad(&e.to_string()))?;
    let mut config = ModelConfig::default();
    for (k, v) in &header.config {
        config.set(k, v)?;
    }
    let mut data = &body[len..];
    let mut params = ParamStore::new();
    for (name, shape) in &header.tensors {
        let count: usize = shape.iter().product();
        if data.len() < 8 * count {
            return Err(bad("truncated tensor data"));
        }
        let values = data[..8 * count]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        data = &data[8 * count..];
        params.add(name, Tensor::new(shape.clone(), values)?)?;
    }
    if !data.is_empty() {
        return Err(bad("trailing bytes"));
    }
    let [words, entities, relations, tags] = header.dims;
    let dims = ModelDims {
        words,
        entities,
        relations,
        tags,
    };
    let encoder = Encoder {
        words: Vocab::from_items(header.words)?,
        entities: Vocab::from_items(header.entities)?,
        edges: EdgeVocab::from_labels(header.edge_labels)?,
        tags: TagSet::new(header.event_types)?,
        allow_unk_label: header.allow_unk_label,
    };
    Ok(Checkpoint {
        model: Model::from_store(config, dims, params)?,
        encoder,
        seed: header.seed,
    })
}

pub fn save(path: &Path, model: &Model, encoder: &Encoder, seed: u64) -> Result<()> {
    std::fs::write(path, to_bytes(model, encoder, seed)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
