use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tags::TagSet;
use super::vocab::{Vocab, PAD};
use super::{Head, Sentence};
use crate::error::Result;
use crate::graph::EdgeVocab;
use crate::numkit::IGNORE;

/// Typed dependency edge, 0-based token indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub head: usize,
    pub dep: usize,
    pub label: usize,
}

/// Id-level view of one sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Encoded {
    pub tokens: Vec<usize>,
    pub entities: Vec<usize>,
    pub edges: Vec<Edge>,
    pub root: Option<usize>,
    pub gold: Vec<usize>,
}

impl Encoded {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    fn truncated(&self, max_len: usize) -> Encoded {
        if self.len() <= max_len {
            return self.clone();
        }
        Encoded {
            tokens: self.tokens[..max_len].to_vec(),
            entities: self.entities[..max_len].to_vec(),
            edges: self
                .edges
                .iter()
                .copied()
                .filter(|e| e.head < max_len && e.dep < max_len)
                .collect(),
            root: self.root.filter(|&r| r < max_len),
            gold: self.gold[..max_len].to_vec(),
        }
    }
}

/// Vocabularies needed to turn sentences into ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Encoder {
    pub words: Vocab,
    pub entities: Vocab,
    pub edges: EdgeVocab,
    pub tags: TagSet,
    pub allow_unk_label: bool,
}

impl Encoder {
    /// Word and entity vocabularies come from `train`; dependency labels and
    /// event types from every split, since both are closed sets.
    pub fn fit(train: &[Sentence], others: &[&[Sentence]]) -> Result<Self> {
        let words = Vocab::build(train.iter().flat_map(|s| s.tokens.iter().map(|t| t.as_str())));
        let entities = Vocab::build(train.iter().flat_map(|s| s.entity_tags.iter().map(|t| t.as_str())));
        let all = || core::iter::once(train).chain(others.iter().copied()).flatten();
        let edges = EdgeVocab::build(all().flat_map(|s| s.edges().map(|(_, _, l)| l)));
        let mut types: Vec<&str> = all()
            .flat_map(|s| s.triggers.iter().map(|t| t.event_type.as_str()))
            .collect();
        types.sort_unstable();
        types.dedup();
        Ok(Encoder {
            words,
            entities,
            edges,
            tags: TagSet::new(types)?,
            allow_unk_label: false,
        })
    }

    pub fn encode(&self, s: &Sentence) -> Result<Encoded> {
        let mut edges = Vec::new();
        for (head, dep, label) in s.edges() {
            edges.push(Edge {
                head,
                dep,
                label: self.edges.id(label, self.allow_unk_label)?,
            });
        }
        Ok(Encoded {
            tokens: s.tokens.iter().map(|t| self.words.id(t)).collect(),
            entities: s.entity_tags.iter().map(|t| self.entities.id(t)).collect(),
            edges,
            root: s.heads.iter().position(|h| *h == Head::Root),
            gold: self.tags.tags_for(s)?,
        })
    }

    pub fn encode_all(&self, sentences: &[Sentence]) -> Result<Vec<Encoded>> {
        sentences.iter().map(|s| self.encode(s)).collect()
    }
}

/// Dependency structure of one batch row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentenceGraph {
    pub len: usize,
    pub edges: Vec<Edge>,
    pub root: Option<usize>,
}

/// Padded mini-batch. Id matrices are `size × width`, row-major. Positions at
/// or past a row's length hold [`PAD`] and, in `gold`, [`IGNORE`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub size: usize,
    pub width: usize,
    pub lengths: Vec<usize>,
    pub tokens: Vec<usize>,
    pub entities: Vec<usize>,
    pub graphs: Vec<SentenceGraph>,
    pub gold: Vec<usize>,
    /// Index of each row in the sequence passed to [`make_batches`].
    pub source: Vec<usize>,
}

impl Batch {
    pub fn from_encoded(rows: &[&Encoded], max_len: usize) -> Batch {
        Self::from_indexed(rows.iter().copied().enumerate(), max_len)
    }

    fn from_indexed<'a>(rows: impl Iterator<Item = (usize, &'a Encoded)> + Clone, max_len: usize) -> Batch {
        let cut: Vec<(usize, Encoded)> = rows.map(|(i, e)| (i, e.truncated(max_len))).collect();
        let size = cut.len();
        let width = cut.iter().map(|(_, e)| e.len()).max().unwrap_or(0);
        let mut b = Batch {
            size,
            width,
            lengths: Vec::with_capacity(size),
            tokens: vec![PAD; size * width],
            entities: vec![PAD; size * width],
            graphs: Vec::with_capacity(size),
            gold: vec![IGNORE; size * width],
            source: Vec::with_capacity(size),
        };
        for (row, (src, e)) in cut.into_iter().enumerate() {
            let off = row * width;
            b.tokens[off..off + e.len()].copy_from_slice(&e.tokens);
            b.entities[off..off + e.len()].copy_from_slice(&e.entities);
            b.gold[off..off + e.len()].copy_from_slice(&e.gold);
            b.lengths.push(e.len());
            b.graphs.push(SentenceGraph {
                len: e.len(),
                edges: e.edges,
                root: e.root,
            });
            b.source.push(src);
        }
        b
    }

    /// Number of real (non-padding) tokens.
    pub fn num_tokens(&self) -> usize {
        self.lengths.iter().sum()
    }

    /// `1.0` at real positions, `0.0` at padding, length `size·width`.
    pub fn token_mask(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.size * self.width];
        for (row, &len) in self.lengths.iter().enumerate() {
            m[row * self.width..row * self.width + len].fill(1.0);
        }
        m
    }

    /// Strips padding, giving back one encoded sentence per row.
    pub fn unbatch(&self) -> Vec<Encoded> {
        (0..self.size)
            .map(|row| {
                let r = row * self.width..row * self.width + self.lengths[row];
                Encoded {
                    tokens: self.tokens[r.clone()].to_vec(),
                    entities: self.entities[r.clone()].to_vec(),
                    edges: self.graphs[row].edges.clone(),
                    root: self.graphs[row].root,
                    gold: self.gold[r].to_vec(),
                }
            })
            .collect()
    }
}

/// Splits `sentences` into padded batches of at most `batch_size` rows. With a
/// seed the order is shuffled deterministically first.
pub fn make_batches(
    sentences: &[Encoded],
    batch_size: usize,
    max_len: usize,
    shuffle_seed: Option<u64>,
) -> Vec<Batch> {
    let batch_size = batch_size.max(1);
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    order
        .chunks(batch_size)
        .map(|chunk| Batch::from_indexed(chunk.iter().map(|&i| (i, &sentences[i])), max_len))
        .collect()
}
