//! Word + entity embeddings, bidirectional LSTM and projection to node states.

use alloc::vec::Vec;

use rand::RngCore;

use crate::corpus::Batch;
use crate::error::Result;
use crate::numkit::{ParamId, Tape, Tensor, Var};

/// Parameters of one LSTM direction. Gates are packed `[i | f | g | o]`.
#[derive(Clone, Copy, Debug)]
pub struct LstmParams {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct InputParams {
    pub word_emb: ParamId,
    pub entity_emb: ParamId,
    pub lstm: Option<[LstmParams; 2]>,
    pub proj_w: ParamId,
    pub proj_b: ParamId,
}

/// One LSTM direction composed from elementary tape ops. Same result as
/// [`Tape::lstm`], which fuses the recurrence into a single node.
pub fn lstm_scan(tape: &mut Tape<'_>, gates_in: Var, w_hh: Var, hidden: usize) -> Result<Var> {
    let s = tape.shape(gates_in).to_vec();
    let (b, n) = (s[0], s[1]);
    let mut h: Option<Var> = None;
    let mut c: Option<Var> = None;
    let mut outs = Vec::with_capacity(n);
    for t in 0..n {
        let x = tape.narrow(gates_in, 1, t, 1)?;
        let mut g = tape.reshape(x, &[b, 4 * hidden])?;
        if let Some(hp) = h {
            let rec = tape.matmul(hp, w_hh)?;
            g = tape.add(g, rec)?;
        }
        let gi = tape.narrow(g, 1, 0, hidden)?;
        let gf = tape.narrow(g, 1, hidden, hidden)?;
        let gg = tape.narrow(g, 1, 2 * hidden, hidden)?;
        let go = tape.narrow(g, 1, 3 * hidden, hidden)?;
        let i = tape.sigmoid(gi);
        let f = tape.sigmoid(gf);
        let cand = tape.tanh(gg);
        let o = tape.sigmoid(go);
        let fresh = tape.mul(i, cand)?;
        let cell = match c {
            Some(cp) => {
                let kept = tape.mul(f, cp)?;
                tape.add(kept, fresh)?
            }
            None => fresh,
        };
        let squashed = tape.tanh(cell);
        let hn = tape.mul(o, squashed)?;
        outs.push(tape.reshape(hn, &[b, 1, hidden])?);
        h = Some(hn);
        c = Some(cell);
    }
    tape.concat(&outs, 1)
}

/// Per-row reversal within each sentence's true length; padding maps to `None`.
fn reversal(batch: &Batch) -> Vec<Option<usize>> {
    let n = batch.width;
    let mut idx = Vec::with_capacity(batch.size * n);
    for (row, &len) in batch.lengths.iter().enumerate() {
        for t in 0..n {
            idx.push((t < len).then(|| row * n + len - 1 - t));
        }
    }
    idx
}

/// Initial node states `H⁰` of shape `[B, n, d]`; padding rows are zero.
pub fn encode(
    tape: &mut Tape<'_>,
    batch: &Batch,
    p: &InputParams,
    dropout: f64,
    mut rng: Option<&mut dyn RngCore>,
) -> Result<Var> {
    let (b, n) = (batch.size, batch.width);
    let words = tape.embed(p.word_emb, batch.tokens.iter().map(|&t| Some(t)).collect())?;
    let ents = tape.embed(p.entity_emb, batch.entities.iter().map(|&t| Some(t)).collect())?;
    let mut x = tape.concat(&[words, ents], 1)?;
    if let Some(r) = rng.as_deref_mut() {
        x = tape.dropout(x, dropout, r)?;
    }
    if let Some(dirs) = &p.lstm {
        let mut halves = Vec::with_capacity(2);
        let rev = reversal(batch);
        for (k, dir) in dirs.iter().enumerate() {
            let w_ih = tape.param(dir.w_ih);
            let w_hh = tape.param(dir.w_hh);
            let bias = tape.param(dir.bias);
            let hidden = tape.shape(w_hh)[0];
            let pre = tape.matmul(x, w_ih)?;
            let mut pre = tape.add_row(pre, bias)?;
            if k == 1 {
                pre = tape.gather(pre, rev.clone())?;
            }
            let pre = tape.reshape(pre, &[b, n, 4 * hidden])?;
            let out = tape.lstm(pre, w_hh)?;
            let mut out = tape.reshape(out, &[b * n, hidden])?;
            if k == 1 {
                out = tape.gather(out, rev.clone())?;
            }
            halves.push(out);
        }
        x = tape.concat(&halves, 1)?;
    }
    let w = tape.param(p.proj_w);
    let bias = tape.param(p.proj_b);
    let d = tape.shape(w)[1];
    let proj = tape.matmul(x, w)?;
    let proj = tape.add_row(proj, bias)?;
    let mask: Vec<f64> = batch
        .token_mask()
        .into_iter()
        .flat_map(|m| core::iter::repeat(m).take(d))
        .collect();
    let masked = tape.mul_const(proj, mask)?;
    tape.reshape(masked, &[b, n, d])
}

/// Uniform init in `[−bound, bound]`.
pub(crate) fn uniform(shape: &[usize], bound: f64, rng: &mut dyn RngCore) -> Tensor {
    use rand::Rng;
    Tensor::from_fn(shape, |_| rng.gen_range(-bound..=bound))
}
