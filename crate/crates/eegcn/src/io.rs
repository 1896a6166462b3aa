//! JSONL corpora and whitespace-separated embedding files.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use eegcn_core::corpus::{Sentence, Trigger, Vocab, PAD};
use eegcn_core::numkit::Tensor;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A trigger on the wire: `[start, end, type]` or `{"start", "end", "event_type"}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum WireTrigger {
    Triple(usize, usize, String),
    Object { start: usize, end: usize, event_type: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    tokens: Vec<String>,
    entity_tags: Vec<String>,
    dep_head: Vec<usize>,
    dep_label: Vec<String>,
    #[serde(default)]
    triggers: Vec<WireTrigger>,
}

/// Sentences read from a corpus file.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedCorpus {
    pub sentences: Vec<Sentence>,
    /// How many sentences were cut to `max_len`.
    pub truncated: usize,
}

fn record_error(path: &Path, line: usize, err: eegcn_core::Error) -> Error {
    Error::Record {
        path: path.to_path_buf(),
        line,
        source: err,
    }
}

/// Parses JSONL text; blank lines are skipped. `path` only labels errors.
pub fn parse_corpus(text: &str, path: &Path, max_len: usize) -> Result<LoadedCorpus> {
    let mut out = LoadedCorpus {
        sentences: Vec::new(),
        truncated: 0,
    };
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        let triggers = rec
            .triggers
            .into_iter()
            .map(|t| match t {
                WireTrigger::Triple(s, e, ty) => Trigger::new(s, e, ty),
                WireTrigger::Object { start, end, event_type } => Trigger::new(start, end, event_type),
            })
            .collect();
        let mut s = Sentence::from_wire(rec.tokens, rec.entity_tags, &rec.dep_head, rec.dep_label, triggers)
            .map_err(|e| record_error(path, line_no, e))?;
        if s.truncate(max_len) {
            out.truncated += 1;
        }
        out.sentences.push(s);
    }
    if out.truncated > 0 {
        log::warn!("{}: {} sentences truncated to {max_len} tokens", path.display(), out.truncated);
    }
    Ok(out)
}

pub fn load_corpus(path: &Path, max_len: usize) -> Result<LoadedCorpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, path, max_len)
}

/// One JSONL line for `s`. Fails for truncated sentences whose heads can no
/// longer be written.
pub fn sentence_json(s: &Sentence) -> Result<String> {
    let dep_head = s
        .wire_heads()
        .ok_or_else(|| Error::Format("sentence has detached tokens".into()))?;
    let rec = Record {
        tokens: s.tokens.clone(),
        entity_tags: s.entity_tags.clone(),
        dep_head,
        dep_label: s.dep_labels.clone(),
        triggers: s
            .triggers
            .iter()
            .map(|t| WireTrigger::Triple(t.start, t.end, t.event_type.clone()))
            .collect(),
    };
    serde_json::to_string(&rec).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_corpus(path: &Path, sentences: &[Sentence]) -> Result<()> {
    let mut buf = String::new();
    for s in sentences {
        buf.push_str(&sentence_json(s)?);
        buf.push('\n');
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// What an embedding file covered.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EmbeddingReport {
    pub found: usize,
    pub missing: usize,
    /// Words listed more than once; the last vector was kept.
    pub duplicates: Vec<String>,
}

/// Reads `count dim` then `word v1 … vdim` lines. Vocabulary words absent
/// from the file get `U[−0.5/dim, 0.5/dim]`; the padding row is zero.
pub fn read_embeddings(
    reader: impl BufRead,
    vocab: &Vocab,
    dim: usize,
    rng: &mut dyn RngCore,
) -> Result<(Tensor, EmbeddingReport)> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, Ok(l))) if l.trim().is_empty() => continue,
            Some((_, Ok(l))) => break l,
            Some((_, Err(e))) => return Err(Error::io("embeddings", e)),
            None => return Err(Error::Format("embedding file has no header".into())),
        }
    };
    let fields: Vec<&str> = header.split_whitespace().collect();
    let parsed: Option<(usize, usize)> = match fields.as_slice() {
        [c, d] => c.parse().ok().zip(d.parse().ok()),
        _ => None,
    };
    let (_, file_dim) = parsed.ok_or_else(|| Error::Format(format!("bad embedding header `{header}`")))?;
    if file_dim != dim {
        return Err(Error::Format(format!("embedding dim {file_dim} in header, expected {dim}")));
    }
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; vocab.len()];
    let mut report = EmbeddingReport::default();
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io("embeddings", e))?;
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let values: Vec<f64> = parts
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?;
        if values.len() != dim {
            return Err(Error::Format(format!("line {}: {} values, expected {dim}", i + 1, values.len())));
        }
        if let Some(id) = vocab.get(word) {
            if rows[id].replace(values).is_some() {
                log::warn!("embedding for `{word}` listed twice; keeping the last");
                report.duplicates.push(word.to_string());
            }
        }
    }
    let bound = 0.5 / dim as f64;
    let mut data = Vec::with_capacity(vocab.len() * dim);
    for (id, row) in rows.into_iter().enumerate() {
        match row {
            _ if id == PAD => data.extend(std::iter::repeat(0.0).take(dim)),
            Some(v) => {
                report.found += 1;
                data.extend(v);
            }
            None => {
                report.missing += 1;
                data.extend((0..dim).map(|_| rng.gen_range(-bound..=bound)));
            }
        }
    }
    Ok((Tensor::new(vec![vocab.len(), dim], data)?, report))
}

pub fn load_embeddings(path: &Path, vocab: &Vocab, dim: usize, rng: &mut dyn RngCore) -> Result<(Tensor, EmbeddingReport)> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(f), vocab, dim, rng)
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
