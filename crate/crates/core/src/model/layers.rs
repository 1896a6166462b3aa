//! Graph layers and the classifier head, all operating on batched tensors.
//!
//! Shapes: node states `[B, n, d]`, adjacency tensors `[B, n, n, p]`, binary
//! or per-relation adjacency matrices `[B, n, n]`.

use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::numkit::{Tape, Tensor, Var};

fn dims3(tape: &Tape<'_>, v: Var, op: &'static str) -> Result<(usize, usize, usize)> {
    match *tape.shape(v) {
        [a, b, c] => Ok((a, b, c)),
        ref s => Err(Error::dim(op, s, &[0, 0, 0])),
    }
}

/// `H · W` applied to every node of a `[B, n, d]` batch.
pub fn node_linear(tape: &mut Tape<'_>, h: Var, w: Var) -> Result<Var> {
    let (b, n, d) = dims3(tape, h, "node_linear")?;
    let out = *tape.shape(w).last().unwrap_or(&0);
    let flat = tape.reshape(h, &[b * n, d])?;
    let hw = tape.matmul(flat, w)?;
    tape.reshape(hw, &[b, n, out])
}

/// Edge-aware node update: `relu(mean_c(E[:, :, c] · H · W))`.
///
/// Channel pooling is linear, so the mean is taken over the adjacency
/// channels first and a single aggregation follows; this equals pooling the
/// per-channel products.
pub fn eanu(tape: &mut Tape<'_>, e: Var, h: Var, w: Var) -> Result<Var> {
    let es = tape.shape(e).to_vec();
    let (b, n, d) = dims3(tape, h, "eanu")?;
    if es.len() != 4 || es[0] != b || es[1] != n || es[2] != n {
        return Err(Error::dim("eanu", &es, tape.shape(h)));
    }
    let ws = tape.shape(w);
    if ws != [d, d] {
        return Err(Error::dim("eanu", tape.shape(h), ws));
    }
    let pooled = tape.mean_last_axis(e)?;
    let hw = node_linear(tape, h, w)?;
    let agg = tape.bmm(pooled, hw)?;
    Ok(tape.relu(agg))
}

/// [`eanu`] computed literally, one aggregation per channel followed by
/// [`Tape::mean_pool`]. Kept as a reference route; `p` times slower.
pub fn eanu_channelwise(tape: &mut Tape<'_>, e: Var, h: Var, w: Var) -> Result<Var> {
    let es = tape.shape(e).to_vec();
    if es.len() != 4 {
        return Err(Error::dim("eanu", &es, tape.shape(h)));
    }
    let (b, n, p) = (es[0], es[1], es[3]);
    let hw = node_linear(tape, h, w)?;
    let mut channels = Vec::with_capacity(p);
    for c in 0..p {
        let slice = tape.narrow(e, 3, c, 1)?;
        let slice = tape.reshape(slice, &[b, n, n])?;
        channels.push(tape.bmm(slice, hw)?);
    }
    let pooled = tape.mean_pool(&channels)?;
    Ok(tape.relu(pooled))
}

/// Node-aware edge update: `E'[i, j, :] = [E[i, j, :] ⊕ h_i ⊕ h_j] · W_u`.
///
/// `W_u` is `(p + 2d) × p`; its row blocks act on the edge, the row node and
/// the column node. `scope`, when given, has one flag per `(b, i, j)` pair and
/// pairs outside it are zeroed.
pub fn naeu(tape: &mut Tape<'_>, e: Var, h: Var, w_u: Var, scope: Option<&[bool]>) -> Result<Var> {
    let es = tape.shape(e).to_vec();
    let (b, n, d) = dims3(tape, h, "naeu")?;
    if es.len() != 4 || es[0] != b || es[1] != n || es[2] != n {
        return Err(Error::dim("naeu", &es, tape.shape(h)));
    }
    let p = es[3];
    let ws = tape.shape(w_u).to_vec();
    if ws != [p + 2 * d, p] {
        return Err(Error::dim("naeu", &ws, &[p + 2 * d, p]));
    }
    let w_edge = tape.narrow(w_u, 0, 0, p)?;
    let w_row = tape.narrow(w_u, 0, p, d)?;
    let w_col = tape.narrow(w_u, 0, p + d, d)?;

    let flat = tape.reshape(e, &[b * n * n, p])?;
    let ew = tape.matmul(flat, w_edge)?;
    let ew = tape.reshape(ew, &[b, n, n, p])?;
    let rows = node_linear(tape, h, w_row)?;
    let cols = node_linear(tape, h, w_col)?;
    let nodes = tape.pair_sum(rows, cols)?;
    let out = tape.add(ew, nodes)?;
    match scope {
        Some(mask) if mask.iter().any(|m| !m) => {
            if mask.len() != b * n * n {
                return Err(Error::dim("naeu", &[mask.len()], &[b, n, n]));
            }
            let expanded = mask
                .iter()
                .flat_map(|&m| core::iter::repeat(if m { 1.0 } else { 0.0 }).take(p))
                .collect();
            tape.mul_const(out, expanded)
        }
        _ => Ok(out),
    }
}

/// Filters of one EE-GCN layer.
#[derive(Clone, Copy, Debug)]
pub struct EeGcnLayer {
    pub w: Var,
    /// `None` disables the edge update; the adjacency tensor passes through.
    pub w_u: Option<Var>,
}

/// Result of a stack of graph layers.
#[derive(Clone, Debug)]
pub struct GraphOutput {
    /// Node states after every layer. When training, states handed to the
    /// next layer carry dropout; the last layer's output does not.
    pub node_states: Vec<Var>,
    /// Adjacency tensors `E^0 … E^L`; empty for baselines.
    pub edge_states: Vec<Var>,
}

impl GraphOutput {
    pub fn last_nodes(&self) -> Var {
        *self.node_states.last().expect("at least one layer")
    }
}

/// Stacked EE-GCN: each layer runs [`eanu`] then [`naeu`]. Dropout, when an
/// RNG is given, applies to the node states passed between layers.
///
/// The final edge update only matters for inspection; it is skipped unless
/// `final_edges` is set.
#[allow(clippy::too_many_arguments)]
pub fn eegcn_forward(
    tape: &mut Tape<'_>,
    e0: Var,
    h0: Var,
    layers: &[EeGcnLayer],
    scope: Option<&[bool]>,
    dropout: f64,
    mut rng: Option<&mut dyn RngCore>,
    final_edges: bool,
) -> Result<GraphOutput> {
    if layers.is_empty() {
        return Err(Error::Argument("EE-GCN needs at least one layer".into()));
    }
    let mut e = e0;
    let mut h = h0;
    let mut out = GraphOutput {
        node_states: Vec::with_capacity(layers.len()),
        edge_states: vec![e0],
    };
    for (l, layer) in layers.iter().enumerate() {
        let updated = eanu(tape, e, h, layer.w)?;
        let last = l + 1 == layers.len();
        if let Some(w_u) = layer.w_u {
            if !last || final_edges {
                e = naeu(tape, e, updated, w_u, scope)?;
            }
        }
        if !last || final_edges {
            out.edge_states.push(e);
        }
        h = match rng.as_deref_mut() {
            Some(r) if !last => tape.dropout(updated, dropout, r)?,
            _ => updated,
        };
        out.node_states.push(h);
    }
    Ok(out)
}

/// Vanilla GCN stack: `relu(A · H · W)` per layer.
pub fn gcn_forward(
    tape: &mut Tape<'_>,
    adjacency: Var,
    h0: Var,
    filters: &[Var],
    dropout: f64,
    mut rng: Option<&mut dyn RngCore>,
) -> Result<GraphOutput> {
    let mut h = h0;
    let mut out = GraphOutput {
        node_states: Vec::with_capacity(filters.len()),
        edge_states: Vec::new(),
    };
    let count = filters.len();
    for (l, &w) in filters.iter().enumerate() {
        let hw = node_linear(tape, h, w)?;
        let agg = tape.bmm(adjacency, hw)?;
        let act = tape.relu(agg);
        h = match rng.as_deref_mut() {
            Some(r) if l + 1 < count => tape.dropout(act, dropout, r)?,
            _ => act,
        };
        out.node_states.push(h);
    }
    Ok(out)
}

/// Row-normalised per-relation adjacency: `A_r[b, i, j] = 1/|N_r(i)|` for
/// `j ∈ N_r(i)`. Relations without any edge in the batch are omitted.
pub fn relation_adjacency(
    relations: &[Option<usize>],
    batch: usize,
    width: usize,
    num_relations: usize,
) -> Vec<(usize, Tensor)> {
    let n = width;
    let mut out = Vec::new();
    for r in 0..num_relations {
        if !relations.iter().any(|x| *x == Some(r)) {
            continue;
        }
        let mut a = Tensor::zeros(&[batch, n, n]);
        for row in 0..batch * n {
            let cells = &relations[row * n..(row + 1) * n];
            let deg = cells.iter().filter(|x| **x == Some(r)).count();
            if deg == 0 {
                continue;
            }
            let inv = 1.0 / deg as f64;
            for (j, c) in cells.iter().enumerate() {
                if *c == Some(r) {
                    a.data_mut()[row * n + j] = inv;
                }
            }
        }
        out.push((r, a));
    }
    out
}

/// Filters of one RGCN layer.
#[derive(Clone, Copy, Debug)]
pub struct RgcnLayer {
    pub w_self: Var,
    /// `[R, d, d]`, one filter per relation.
    pub w_rel: Var,
}

/// RGCN stack: `relu(Σ_r A_r · H · W_r + H · W_self)` per layer.
pub fn rgcn_forward(
    tape: &mut Tape<'_>,
    adjacency: &[(usize, Tensor)],
    h0: Var,
    layers: &[RgcnLayer],
    dropout: f64,
    mut rng: Option<&mut dyn RngCore>,
) -> Result<GraphOutput> {
    let adj: Vec<(usize, Var)> = adjacency
        .iter()
        .map(|(r, a)| (*r, tape.constant(a.clone())))
        .collect();
    let mut h = h0;
    let mut out = GraphOutput {
        node_states: Vec::with_capacity(layers.len()),
        edge_states: Vec::new(),
    };
    let count = layers.len();
    for (l, layer) in layers.iter().enumerate() {
        let ws = tape.shape(layer.w_rel).to_vec();
        if ws.len() != 3 || ws[1] != ws[2] {
            return Err(Error::dim("rgcn", &ws, &[0, 0, 0]));
        }
        let d = ws[1];
        let mut acc = node_linear(tape, h, layer.w_self)?;
        for &(r, a) in &adj {
            let w = tape.narrow(layer.w_rel, 0, r, 1)?;
            let w = tape.reshape(w, &[d, d])?;
            let hw = node_linear(tape, h, w)?;
            let msg = tape.bmm(a, hw)?;
            acc = tape.add(acc, msg)?;
        }
        let act = tape.relu(acc);
        h = match rng.as_deref_mut() {
            Some(r) if l + 1 < count => tape.dropout(act, dropout, r)?,
            _ => act,
        };
        out.node_states.push(h);
    }
    Ok(out)
}

/// Tag distribution per token: `softmax(h · W_t + b_t)` over `[N, d]` rows.
pub fn classify(tape: &mut Tape<'_>, h: Var, w_t: Var, b_t: Var) -> Result<Var> {
    let logits = tape.matmul(h, w_t)?;
    let logits = tape.add_row(logits, b_t)?;
    tape.softmax(logits)
}
