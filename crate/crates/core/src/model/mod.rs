//! Input layer, graph encoders (EE-GCN, GCN, RGCN) and the tag classifier.

mod config;
mod input;
pub mod layers;

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

pub use config::{Baseline, ClassifierInput, ModelConfig};
pub use input::{encode, lstm_scan, InputParams, LstmParams};
pub use layers::{
    classify, eanu, eanu_channelwise, eegcn_forward, gcn_forward, naeu, node_linear, relation_adjacency,
    rgcn_forward, EeGcnLayer, GraphOutput, RgcnLayer,
};

use crate::corpus::{Batch, PAD};
use crate::error::{Error, Result};
use crate::graph::{self, EdgeInit};
use crate::loss::{bias_loss, LossValue};
use crate::numkit::{ParamId, ParamStore, Tape, Tensor, Var};
use input::uniform;

/// Vocabulary-dependent sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    pub words: usize,
    pub entities: usize,
    /// Relation embedding rows, reserved relations included.
    pub relations: usize,
    pub tags: usize,
}

#[derive(Clone, Debug)]
enum GraphParams {
    EeGcn {
        edges: EdgeInit,
        layers: Vec<(ParamId, Option<ParamId>)>,
    },
    Gcn(Vec<ParamId>),
    Rgcn(Vec<(ParamId, ParamId)>),
}

/// A full tagger: parameters plus the ids that wire them together.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub dims: ModelDims,
    pub params: ParamStore,
    input: InputParams,
    graph: GraphParams,
    cls_w: ParamId,
    cls_b: ParamId,
}

/// Tape handles produced by [`Model::forward`].
#[derive(Clone, Debug)]
pub struct Forward {
    pub h0: Var,
    pub graph: GraphOutput,
    pub probs: Var,
    pub edge_mask: Vec<bool>,
}

fn glorot(rows: usize, cols: usize, rng: &mut dyn RngCore) -> Tensor {
    let bound = libm::sqrt(6.0 / (rows + cols) as f64);
    uniform(&[rows, cols], bound, rng)
}

/// Embedding table in `U[−1, 1]` with a zero padding row.
fn embedding(rows: usize, dim: usize, rng: &mut dyn RngCore) -> Tensor {
    let mut t = uniform(&[rows, dim], 1.0, rng);
    t.data_mut()[PAD * dim..(PAD + 1) * dim].fill(0.0);
    t
}

impl Model {
    /// Freshly initialised parameters.
    pub fn new(config: ModelConfig, dims: ModelDims, rng: &mut dyn RngCore) -> Result<Model> {
        config.validate()?;
        let c = &config;
        let mut s = ParamStore::new();
        let emb_in = c.word_dim + c.entity_dim;
        s.add("word_emb", embedding(dims.words, c.word_dim, rng))?;
        s.add("entity_emb", embedding(dims.entities, c.entity_dim, rng))?;
        let enc_out = if c.use_bilstm {
            let h = c.lstm_hidden;
            let bound = 1.0 / libm::sqrt(h as f64);
            for dir in ["fwd", "bwd"] {
                s.add(&format!("lstm.{dir}.w_ih"), uniform(&[emb_in, 4 * h], bound, rng))?;
                s.add(&format!("lstm.{dir}.w_hh"), uniform(&[h, 4 * h], bound, rng))?;
                s.add(&format!("lstm.{dir}.bias"), uniform(&[4 * h], bound, rng))?;
            }
            2 * h
        } else {
            emb_in
        };
        let d = c.gcn_hidden;
        s.add("proj.w", glorot(enc_out, d, rng))?;
        s.add("proj.b", Tensor::zeros(&[d]))?;
        match c.baseline {
            Baseline::EeGcn => {
                let p = c.edge_dim;
                let rows = if c.use_typed_labels { dims.relations } else { 1 };
                let table = Tensor::from_fn(&[rows, p], |_| rng.gen_range(0.0..1.0));
                s.add(if c.use_typed_labels { "edge_emb" } else { "edge_shared" }, table)?;
                for l in 0..c.layers {
                    s.add(&format!("layer{l}.w"), glorot(d, d, rng))?;
                    if c.use_naeu {
                        s.add(&format!("layer{l}.w_u"), glorot(p + 2 * d, p, rng))?;
                    }
                }
            }
            Baseline::Gcn => {
                for l in 0..c.layers {
                    s.add(&format!("layer{l}.w"), glorot(d, d, rng))?;
                }
            }
            Baseline::Rgcn => {
                let bound = libm::sqrt(3.0 / d as f64);
                for l in 0..c.layers {
                    s.add(&format!("layer{l}.w_self"), glorot(d, d, rng))?;
                    s.add(&format!("layer{l}.w_rel"), uniform(&[dims.relations, d, d], bound, rng))?;
                }
            }
        }
        let cls_in = match c.classifier_input {
            ClassifierInput::Last => d,
            ClassifierInput::ConcatLayers => d * c.layers,
        };
        s.add("cls.w", glorot(cls_in, dims.tags, rng))?;
        s.add("cls.b", Tensor::zeros(&[dims.tags]))?;
        Model::from_store(config, dims, s)
    }

    /// Wires up an existing parameter set (e.g. from a checkpoint), checking
    /// that every expected tensor is present with the right shape.
    pub fn from_store(config: ModelConfig, dims: ModelDims, params: ParamStore) -> Result<Model> {
        config.validate()?;
        let c = &config;
        let d = c.gcn_hidden;
        let p = c.edge_dim;
        let find = |name: &str, shape: &[usize]| -> Result<ParamId> {
            let id = params
                .id(name)
                .ok_or_else(|| Error::State(format!("missing parameter `{name}`")))?;
            let got = params.value(id).shape();
            if got != shape {
                return Err(Error::dim("parameter shape", got, shape));
            }
            Ok(id)
        };
        let emb_in = c.word_dim + c.entity_dim;
        let lstm = if c.use_bilstm {
            let h = c.lstm_hidden;
            let dir = |name: &str| -> Result<LstmParams> {
                Ok(LstmParams {
                    w_ih: find(&format!("lstm.{name}.w_ih"), &[emb_in, 4 * h])?,
                    w_hh: find(&format!("lstm.{name}.w_hh"), &[h, 4 * h])?,
                    bias: find(&format!("lstm.{name}.bias"), &[4 * h])?,
                })
            };
            Some([dir("fwd")?, dir("bwd")?])
        } else {
            None
        };
        let enc_out = if c.use_bilstm { 2 * c.lstm_hidden } else { emb_in };
        let input = InputParams {
            word_emb: find("word_emb", &[dims.words, c.word_dim])?,
            entity_emb: find("entity_emb", &[dims.entities, c.entity_dim])?,
            lstm,
            proj_w: find("proj.w", &[enc_out, d])?,
            proj_b: find("proj.b", &[d])?,
        };
        let graph = match c.baseline {
            Baseline::EeGcn => {
                let edges = if c.use_typed_labels {
                    EdgeInit::Typed(find("edge_emb", &[dims.relations, p])?)
                } else {
                    EdgeInit::Shared(find("edge_shared", &[1, p])?)
                };
                let layers = (0..c.layers)
                    .map(|l| {
                        let w = find(&format!("layer{l}.w"), &[d, d])?;
                        let w_u = if c.use_naeu {
                            Some(find(&format!("layer{l}.w_u"), &[p + 2 * d, p])?)
                        } else {
                            None
                        };
                        Ok((w, w_u))
                    })
                    .collect::<Result<_>>()?;
                GraphParams::EeGcn { edges, layers }
            }
            Baseline::Gcn => GraphParams::Gcn(
                (0..c.layers)
                    .map(|l| find(&format!("layer{l}.w"), &[d, d]))
                    .collect::<Result<_>>()?,
            ),
            Baseline::Rgcn => GraphParams::Rgcn(
                (0..c.layers)
                    .map(|l| {
                        Ok((
                            find(&format!("layer{l}.w_self"), &[d, d])?,
                            find(&format!("layer{l}.w_rel"), &[dims.relations, d, d])?,
                        ))
                    })
                    .collect::<Result<_>>()?,
            ),
        };
        let cls_in = match c.classifier_input {
            ClassifierInput::Last => d,
            ClassifierInput::ConcatLayers => d * c.layers,
        };
        let cls_w = find("cls.w", &[cls_in, dims.tags])?;
        let cls_b = find("cls.b", &[dims.tags])?;
        Ok(Model {
            config,
            dims,
            params,
            input,
            graph,
            cls_w,
            cls_b,
        })
    }

    pub fn input_params(&self) -> &InputParams {
        &self.input
    }

    /// Runs the network on `batch`. Passing an RNG selects training mode
    /// (dropout on); `None` is deterministic inference. With `final_edges`
    /// the last layer's edge update is computed as well.
    pub fn forward(
        &self,
        tape: &mut Tape<'_>,
        batch: &Batch,
        mut rng: Option<&mut dyn RngCore>,
        final_edges: bool,
    ) -> Result<Forward> {
        let c = &self.config;
        let h0 = encode(tape, batch, &self.input, c.dropout, rng.as_mut().map(|r| &mut **r as &mut dyn RngCore))?;
        let mut edge_mask = Vec::new();
        let graph_out = match &self.graph {
            GraphParams::EeGcn { edges, layers } => {
                let adj = graph::build_adjacency(tape, batch, *edges, c.add_all_self_loops)?;
                let scope = if c.naeu_masked {
                    adj.edge_mask.clone()
                } else {
                    graph::valid_pairs(batch)
                };
                let layers: Vec<EeGcnLayer> = layers
                    .iter()
                    .map(|&(w, w_u)| EeGcnLayer {
                        w: tape.param(w),
                        w_u: w_u.map(|u| tape.param(u)),
                    })
                    .collect();
                let out = eegcn_forward(tape, adj.edges, h0, &layers, Some(&scope), c.dropout, rng, final_edges)?;
                edge_mask = adj.edge_mask;
                out
            }
            GraphParams::Gcn(ws) => {
                let a = graph::binary_adjacency(batch, c.add_all_self_loops);
                edge_mask = a.data().iter().map(|&v| v != 0.0).collect();
                let a = tape.constant(a);
                let ws: Vec<Var> = ws.iter().map(|&w| tape.param(w)).collect();
                gcn_forward(tape, a, h0, &ws, c.dropout, rng)?
            }
            GraphParams::Rgcn(ls) => {
                let rel = graph::pair_relations(batch, c.add_all_self_loops);
                let adj = relation_adjacency(&rel, batch.size, batch.width, self.dims.relations);
                let layers: Vec<RgcnLayer> = ls
                    .iter()
                    .map(|&(ws, wr)| RgcnLayer {
                        w_self: tape.param(ws),
                        w_rel: tape.param(wr),
                    })
                    .collect();
                rgcn_forward(tape, &adj, h0, &layers, c.dropout, rng)?
            }
        };
        let feats = match c.classifier_input {
            ClassifierInput::Last => graph_out.last_nodes(),
            ClassifierInput::ConcatLayers => tape.concat(&graph_out.node_states, 2)?,
        };
        let width = *tape.shape(feats).last().expect("rank 3");
        let flat = tape.reshape(feats, &[batch.size * batch.width, width])?;
        let w_t = tape.param(self.cls_w);
        let b_t = tape.param(self.cls_b);
        let probs = classify(tape, flat, w_t, b_t)?;
        Ok(Forward {
            h0,
            graph: graph_out,
            probs,
            edge_mask,
        })
    }

    /// Forward pass plus bias loss against the batch's gold tags.
    pub fn loss(&self, tape: &mut Tape<'_>, batch: &Batch, rng: Option<&mut dyn RngCore>) -> Result<(Forward, LossValue)> {
        let fwd = self.forward(tape, batch, rng, false)?;
        let loss = bias_loss(tape, fwd.probs, &batch.gold, self.config.alpha)?;
        Ok((fwd, loss))
    }

    /// Arg-max tag ids per row, truncated to each row's length.
    pub fn predict(&self, batch: &Batch) -> Result<Vec<Vec<usize>>> {
        let mut tape = Tape::new(&self.params);
        let fwd = self.forward(&mut tape, batch, None, false)?;
        Ok(argmax_rows(tape.value(fwd.probs), batch))
    }
}

/// Arg-max over the tag axis of `[B·n, T]` probabilities.
pub fn argmax_rows(probs: &Tensor, batch: &Batch) -> Vec<Vec<usize>> {
    let t = probs.shape()[1];
    (0..batch.size)
        .map(|row| {
            (0..batch.lengths[row])
                .map(|i| {
                    let r = &probs.data()[(row * batch.width + i) * t..(row * batch.width + i + 1) * t];
                    let mut best = 0;
                    for (k, &v) in r.iter().enumerate() {
                        if v > r[best] {
                            best = k;
                        }
                    }
                    best
                })
                .collect()
        })
        .collect()
}
