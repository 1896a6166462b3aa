//! Adjacency tensors built from dependency parses.
//!
//! Every dependency `(head, dependent, label)` writes the label embedding to
//! both `E[head, dep, :]` and `E[dep, head, :]`; the ROOT token gets a self
//! loop carrying the reserved ROOT relation. All other pairs are zero.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::Batch;
use crate::error::{Error, Result};
use crate::numkit::{ParamId, Tape, Tensor, Var};

/// Reserved relation for the ROOT self loop.
pub const ROOT_LABEL: usize = 0;
/// Reserved relation for optional non-ROOT self loops.
pub const SELF_LABEL: usize = 1;
/// Reserved relation for parser labels unseen at fitting time.
pub const UNK_LABEL: usize = 2;
const RESERVED: [&str; 3] = ["<ROOT>", "<SELF>", "<UNK>"];

/// Dependency label ↔ relation id. Reserved ids never collide with parser
/// labels, even a parser label spelled `ROOT`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeVocab {
    labels: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl EdgeVocab {
    pub fn build<'a, I: IntoIterator<Item = &'a str>>(labels: I) -> Self {
        let mut v = EdgeVocab {
            labels: Vec::new(),
            index: BTreeMap::new(),
        };
        for l in labels {
            if !v.index.contains_key(l) {
                v.index.insert(l.to_string(), RESERVED.len() + v.labels.len());
                v.labels.push(l.to_string());
            }
        }
        v
    }

    /// Restores from the saved parser-label list.
    pub fn from_labels(labels: Vec<String>) -> Result<Self> {
        let v = Self::build(labels.iter().map(String::as_str));
        if v.labels.len() != labels.len() {
            return Err(Error::invalid("edge vocab", "duplicate label"));
        }
        Ok(v)
    }

    pub fn id(&self, label: &str, allow_unk: bool) -> Result<usize> {
        match self.index.get(label) {
            Some(&id) => Ok(id),
            None if allow_unk => Ok(UNK_LABEL),
            None => Err(Error::Vocabulary {
                kind: "dependency label",
                value: label.to_string(),
            }),
        }
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        match id {
            i if i < RESERVED.len() => Some(RESERVED[i]),
            i => self.labels.get(i - RESERVED.len()).map(String::as_str),
        }
    }

    /// Parser labels, without the reserved relations.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Size of the relation embedding table.
    pub fn len(&self) -> usize {
        RESERVED.len() + self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// How present edges are initialised.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeInit {
    /// Per-relation rows of a `|R| × p` table.
    Typed(ParamId),
    /// One shared `1 × p` vector for every present edge.
    Shared(ParamId),
}

/// Batched adjacency tensor `[B, n, n, p]` and its edge mask `[B, n, n]`.
#[derive(Clone, Debug)]
pub struct AdjacencyTensor {
    pub edges: Var,
    pub edge_mask: Vec<bool>,
    pub batch: usize,
    pub width: usize,
    pub channels: usize,
}

/// Relation id of each ordered pair, `None` where no edge exists.
pub fn pair_relations(batch: &Batch, add_all_self_loops: bool) -> Vec<Option<usize>> {
    let n = batch.width;
    let mut rel = vec![None; batch.size * n * n];
    for (b, g) in batch.graphs.iter().enumerate() {
        let base = b * n * n;
        if add_all_self_loops {
            for i in 0..g.len {
                rel[base + i * n + i] = Some(SELF_LABEL);
            }
        }
        for e in &g.edges {
            rel[base + e.head * n + e.dep] = Some(e.label);
            rel[base + e.dep * n + e.head] = Some(e.label);
        }
        if let Some(r) = g.root {
            rel[base + r * n + r] = Some(ROOT_LABEL);
        }
    }
    rel
}

/// Binary adjacency `[B, n, n]` holding 1 wherever the edge mask is set.
pub fn binary_adjacency(batch: &Batch, add_all_self_loops: bool) -> Tensor {
    let data = pair_relations(batch, add_all_self_loops)
        .iter()
        .map(|r| if r.is_some() { 1.0 } else { 0.0 })
        .collect();
    Tensor::new(vec![batch.size, batch.width, batch.width], data).expect("shape")
}

/// `[B, n, n]` mask of pairs where both tokens are real (not padding).
pub fn valid_pairs(batch: &Batch) -> Vec<bool> {
    let n = batch.width;
    let mut m = vec![false; batch.size * n * n];
    for (b, &len) in batch.lengths.iter().enumerate() {
        for i in 0..len {
            m[b * n * n + i * n..b * n * n + i * n + len].fill(true);
        }
    }
    m
}

/// Builds the initial adjacency tensor of a batch on the tape; gradients flow
/// back into the relation embeddings.
pub fn build_adjacency(
    tape: &mut Tape<'_>,
    batch: &Batch,
    init: EdgeInit,
    add_all_self_loops: bool,
) -> Result<AdjacencyTensor> {
    let rel = pair_relations(batch, add_all_self_loops);
    let edge_mask: Vec<bool> = rel.iter().map(Option::is_some).collect();
    let (table, rows) = match init {
        EdgeInit::Typed(t) => (t, rel),
        EdgeInit::Shared(t) => (t, rel.iter().map(|r| r.map(|_| 0)).collect()),
    };
    let channels = tape.store().value(table).shape()[1];
    let flat = tape.embed(table, rows)?;
    let n = batch.width;
    let edges = tape.reshape(flat, &[batch.size, n, n, channels])?;
    Ok(AdjacencyTensor {
        edges,
        edge_mask,
        batch: batch.size,
        width: n,
        channels,
    })
}

/// `M[i, j] = ‖E[i, j, :]‖₂` for an `n × n × p` tensor.
pub fn relevance_matrix(edges: &Tensor) -> Result<Tensor> {
    let s = edges.shape();
    if s.len() != 3 || s[0] != s[1] {
        return Err(Error::dim("relevance_matrix", s, &[0, 0, 0]));
    }
    let p = s[2];
    let data = edges
        .data()
        .chunks(p.max(1))
        .map(|c| libm::sqrt(c.iter().map(|v| v * v).sum::<f64>()))
        .collect();
    Tensor::new(vec![s[0], s[1]], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Edge, Encoded};
    use crate::numkit::ParamStore;

    /// Putin(0) visited(1) Bush(2) at(3) ranch(4)
    fn fig1() -> (Batch, EdgeVocab) {
        let vocab = EdgeVocab::build(["nsubj", "dobj", "case", "nmod"]);
        let id = |l| vocab.id(l, false).unwrap();
        let e = Encoded {
            tokens: vec![2, 3, 4, 5, 6],
            entities: vec![2; 5],
            edges: vec![
                Edge { head: 1, dep: 0, label: id("nsubj") },
                Edge { head: 1, dep: 2, label: id("dobj") },
                Edge { head: 4, dep: 3, label: id("case") },
                Edge { head: 1, dep: 4, label: id("nmod") },
            ],
            root: Some(1),
            gold: vec![0; 5],
        };
        (Batch::from_encoded(&[&e], 50), vocab)
    }

    fn table(vocab: &EdgeVocab, p: usize) -> (ParamStore, ParamId) {
        let mut store = ParamStore::new();
        let t = Tensor::from_fn(&[vocab.len(), p], |k| 1.0 + k as f64);
        let id = store.add("edge", t).unwrap();
        (store, id)
    }

    #[test]
    fn typed_edges_are_symmetric_and_sparse() {
        let (batch, vocab) = fig1();
        let (store, id) = table(&vocab, 3);
        let mut tape = Tape::new(&store);
        let adj = build_adjacency(&mut tape, &batch, EdgeInit::Typed(id), false).unwrap();
        let e = tape.value(adj.edges).clone().reshape(&[5, 5, 3]).unwrap();
        let nsubj = vocab.id("nsubj", false).unwrap();
        let want: Vec<f64> = store.value(id).data()[nsubj * 3..nsubj * 3 + 3].to_vec();
        for c in 0..3 {
            assert_eq!(e.get(&[1, 0, c]), want[c]);
            assert_eq!(e.get(&[0, 1, c]), want[c]);
            assert_eq!(e.get(&[0, 2, c]), 0.0);
            assert_eq!(e.get(&[1, 1, c]), store.value(id).data()[ROOT_LABEL * 3 + c]);
        }
        for i in 0..5 {
            for j in 0..5 {
                for c in 0..3 {
                    assert_eq!(e.get(&[i, j, c]), e.get(&[j, i, c]));
                    if !adj.edge_mask[i * 5 + j] {
                        assert_eq!(e.get(&[i, j, c]), 0.0);
                    }
                }
            }
        }
        assert_eq!(adj.edge_mask.iter().filter(|&&m| m).count(), 2 * 4 + 1);
    }

    #[test]
    fn gradients_reach_label_table() {
        let (batch, vocab) = fig1();
        let (store, id) = table(&vocab, 2);
        let mut tape = Tape::new(&store);
        let adj = build_adjacency(&mut tape, &batch, EdgeInit::Typed(id), false).unwrap();
        let s = tape.sum(adj.edges);
        let g = tape.backward(s).unwrap();
        let g = g.get(id).unwrap();
        let nsubj = vocab.id("nsubj", false).unwrap();
        assert_eq!(&g[nsubj * 2..nsubj * 2 + 2], &[2.0, 2.0]);
        assert_eq!(&g[ROOT_LABEL * 2..ROOT_LABEL * 2 + 2], &[1.0, 1.0]);
        assert_eq!(&g[UNK_LABEL * 2..UNK_LABEL * 2 + 2], &[0.0, 0.0]);
    }

    #[test]
    fn shared_init_uses_one_vector() {
        let (batch, _) = fig1();
        let mut store = ParamStore::new();
        let id = store.add("shared", Tensor::full(&[1, 2], 0.25)).unwrap();
        let mut tape = Tape::new(&store);
        let adj = build_adjacency(&mut tape, &batch, EdgeInit::Shared(id), true).unwrap();
        let e = tape.value(adj.edges);
        let nonzero = e.data().iter().filter(|&&v| v != 0.0).count();
        // 4 edges both ways, 5 self loops (ROOT included), 2 channels.
        assert_eq!(nonzero, (8 + 5) * 2);
    }

    #[test]
    fn unknown_label_policy() {
        let v = EdgeVocab::build(["nsubj", "ROOT"]);
        assert!(v.id("amod", false).is_err());
        assert_eq!(v.id("amod", true).unwrap(), UNK_LABEL);
        assert_ne!(v.id("ROOT", false).unwrap(), ROOT_LABEL);
        assert_eq!(v.name(ROOT_LABEL), Some("<ROOT>"));
    }

    #[test]
    fn relevance_norms() {
        let mut e = Tensor::zeros(&[2, 2, 3]);
        e.set(&[0, 1, 0], 3.0);
        e.set(&[0, 1, 1], 4.0);
        let m = relevance_matrix(&e).unwrap();
        assert_eq!(m.get(&[0, 1]), 5.0);
        assert_eq!(m.get(&[1, 0]), 0.0);
    }
}
