//! Class-weighted negative log-likelihood over BI/O tags.

use alloc::vec::Vec;

use crate::corpus::OUTSIDE;
use crate::error::{Error, Result};
use crate::numkit::{Tape, Var, IGNORE, PROB_EPSILON};

/// Summed loss plus bookkeeping for the tokens that were scored.
#[derive(Clone, Copy, Debug)]
pub struct LossValue {
    pub total: Var,
    /// Unmasked tokens.
    pub tokens: usize,
    /// Tokens whose gold probability fell below the clamp.
    pub clamped: usize,
}

/// Per-token weights: `1` for `O`, `alpha` for event tags, `0` for padding.
pub fn tag_weights(gold: &[usize], alpha: f64) -> Vec<f64> {
    gold.iter()
        .map(|&g| match g {
            IGNORE => 0.0,
            OUTSIDE => 1.0,
            _ => alpha,
        })
        .collect()
}

/// `Σ_i w_i · −log p_i(gold_i)` over `[N, T]` probabilities; rows whose gold
/// id is [`IGNORE`] contribute nothing.
pub fn bias_loss(tape: &mut Tape<'_>, probs: Var, gold: &[usize], alpha: f64) -> Result<LossValue> {
    if !(alpha >= 1.0) || !alpha.is_finite() {
        return Err(Error::Argument(alloc::format!("alpha {alpha} must be ≥ 1")));
    }
    let t = tape.value(probs);
    let cols = *t.shape().last().unwrap_or(&0);
    let mut tokens = 0;
    let mut clamped = 0;
    for (i, &g) in gold.iter().enumerate() {
        if g == IGNORE {
            continue;
        }
        tokens += 1;
        if g < cols && t.data().get(i * cols + g).is_some_and(|&p| p < PROB_EPSILON) {
            clamped += 1;
        }
    }
    let total = tape.weighted_nll(probs, gold.to_vec(), tag_weights(gold, alpha))?;
    Ok(LossValue {
        total,
        tokens,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{ParamStore, Tensor};
    use alloc::vec;

    fn loss_of(probs: &[f64], t: usize, gold: &[usize], alpha: f64) -> (f64, usize) {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let p = tape.constant(Tensor::new(vec![gold.len(), t], probs.to_vec()).unwrap());
        let l = bias_loss(&mut tape, p, gold, alpha).unwrap();
        (tape.value(l.total).data()[0], l.clamped)
    }

    #[test]
    fn certain_outside_costs_nothing() {
        assert_eq!(loss_of(&[1.0, 0.0, 0.0], 3, &[0], 5.0).0, 0.0);
    }

    #[test]
    fn event_tag_at_inverse_e() {
        let p = libm::exp(-1.0);
        let (l, _) = loss_of(&[1.0 - p, p, 0.0], 3, &[1], 5.0);
        assert!((l - 5.0).abs() < 1e-12);
    }

    #[test]
    fn event_term_is_alpha_times_outside_term() {
        let (o, _) = loss_of(&[0.3, 0.7], 2, &[0], 5.0);
        let (e, _) = loss_of(&[0.7, 0.3], 2, &[1], 5.0);
        assert!((e - 5.0 * o).abs() < 1e-12);
    }

    #[test]
    fn padding_and_clamp() {
        let (l, clamped) = loss_of(&[0.0, 1.0, 0.5, 0.5], 2, &[0, IGNORE], 1.0);
        assert!((l + libm::log(PROB_EPSILON)).abs() < 1e-9);
        assert_eq!(clamped, 1);
    }

    #[test]
    fn alpha_below_one_rejected() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let p = tape.constant(Tensor::new(vec![1, 2], vec![0.5, 0.5]).unwrap());
        assert!(bias_loss(&mut tape, p, &[1], 0.5).is_err());
    }
}
