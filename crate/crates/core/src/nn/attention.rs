use crate::autodiff::{Tape, Var};
use crate::error::TensorError;
use crate::nn::params::{glorot, Bound, ParamSet};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;

/// Token-level attention: `w_a` is `2d×2d`, `context` is `2d×1`.
#[derive(Clone, Copy, Debug)]
pub struct AttentionParams {
    pub w_a: Var,
    pub context: Var,
}

impl AttentionParams {
    pub fn from_bound(bound: &Bound, prefix: &str) -> Result<Self, TensorError> {
        Ok(Self {
            w_a: bound.get(&format!("{prefix}.w_a"))?,
            context: bound.get(&format!("{prefix}.context"))?,
        })
    }
}

pub fn init_attention<T: Scalar>(
    set: &mut ParamSet<T>,
    prefix: &str,
    width: usize,
    rng: &mut SplitMix64,
) {
    set.insert(format!("{prefix}.w_a"), glorot(width, width, rng), true);
    set.insert(format!("{prefix}.context"), glorot(width, 1, rng), true);
}

/// Attention weights `α = softmax(tanh(H·W_a)·v)` over real tokens, `B×L`.
pub fn attention_weights<T: Scalar>(
    tape: &mut Tape<T>,
    states: Var,
    lengths: &[usize],
    p: &AttentionParams,
) -> Result<Var, TensorError> {
    let s = tape.shape(states).to_vec();
    if s.len() != 3 || tape.shape(p.w_a) != [s[2], s[2]] {
        return Err(TensorError::Shape {
            op: "attention_pool",
            lhs: s,
            rhs: tape.shape(p.w_a).to_vec(),
        });
    }
    let (b, l, w) = (s[0], s[1], s[2]);
    let flat = tape.reshape(states, &[b * l, w])?;
    let proj = tape.matmul(flat, p.w_a)?;
    let act = tape.tanh(proj)?;
    let scores = tape.matmul(act, p.context)?;
    let scores = tape.reshape(scores, &[b, l])?;
    tape.masked_softmax(scores, lengths)
}

/// Attention-pooled summary `Hᵀα` of `B×L×2d` states, giving `B×2d`.
pub fn attention_pool<T: Scalar>(
    tape: &mut Tape<T>,
    states: Var,
    lengths: &[usize],
    p: &AttentionParams,
) -> Result<Var, TensorError> {
    let alpha = attention_weights(tape, states, lengths, p)?;
    tape.weighted_sum(states, alpha)
}
