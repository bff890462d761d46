use crate::autodiff::{Tape, Var};
use crate::error::TensorError;
use crate::nn::params::{glorot, Bound, ParamSet};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One LSTM direction bound on a tape. Gate blocks are laid out `[i, f, g, o]`
/// along the `4d` axis of `w_ih` (`in×4d`), `w_hh` (`d×4d`) and `bias` (`4d`).
#[derive(Clone, Copy, Debug)]
pub struct LstmParams {
    pub w_ih: Var,
    pub w_hh: Var,
    pub bias: Var,
    pub hidden: usize,
}

impl LstmParams {
    pub fn from_bound<T: Scalar>(
        tape: &Tape<T>,
        bound: &Bound,
        prefix: &str,
    ) -> Result<Self, TensorError> {
        let w_hh = bound.get(&format!("{prefix}.w_hh"))?;
        Ok(Self {
            w_ih: bound.get(&format!("{prefix}.w_ih"))?,
            w_hh,
            bias: bound.get(&format!("{prefix}.bias"))?,
            hidden: tape.shape(w_hh)[0],
        })
    }
}

/// Add Glorot-initialized LSTM weights to `set`; forget-gate bias starts at 1.
pub fn init_lstm<T: Scalar>(
    set: &mut ParamSet<T>,
    prefix: &str,
    input: usize,
    hidden: usize,
    rng: &mut SplitMix64,
) {
    set.insert(
        format!("{prefix}.w_ih"),
        glorot(input, 4 * hidden, rng),
        true,
    );
    set.insert(
        format!("{prefix}.w_hh"),
        glorot(hidden, 4 * hidden, rng),
        true,
    );
    let mut bias = vec![T::zero(); 4 * hidden];
    bias[hidden..2 * hidden].fill(T::one());
    set.insert(format!("{prefix}.bias"), Tensor::vector(bias), true);
}

/// Gate arithmetic given the input projection `x·W_ih` (`B×4d`).
fn cell<T: Scalar>(
    tape: &mut Tape<T>,
    x_proj: Var,
    h_prev: Var,
    c_prev: Var,
    p: &LstmParams,
) -> Result<(Var, Var), TensorError> {
    let d = p.hidden;
    let hw = tape.matmul(h_prev, p.w_hh)?;
    let pre = tape.add(x_proj, hw)?;
    let gates = tape.add_bias(pre, p.bias)?;
    let i = tape.slice_last(gates, 0, d)?;
    let i = tape.sigmoid(i)?;
    let f = tape.slice_last(gates, d, d)?;
    let f = tape.sigmoid(f)?;
    let g = tape.slice_last(gates, 2 * d, d)?;
    let g = tape.tanh(g)?;
    let o = tape.slice_last(gates, 3 * d, d)?;
    let o = tape.sigmoid(o)?;
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c)?;
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

/// One LSTM step: `x` is `B×in`, states are `B×d`.
pub fn lstm_step<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    p: &LstmParams,
) -> Result<(Var, Var), TensorError> {
    let (sx, sh, sc) = (
        tape.shape(x).to_vec(),
        tape.shape(h_prev).to_vec(),
        tape.shape(c_prev).to_vec(),
    );
    if sh != sc || sh.len() != 2 || sx.len() != 2 || sx[0] != sh[0] || sh[1] != p.hidden {
        return Err(TensorError::Shape {
            op: "lstm_step",
            lhs: sx,
            rhs: sh,
        });
    }
    let x_proj = tape.matmul(x, p.w_ih)?;
    cell(tape, x_proj, h_prev, c_prev, p)
}

/// Per-direction result of a masked LSTM sweep.
struct Sweep {
    /// `B×L×d` outputs, zero at padded positions.
    outputs: Var,
    /// State after the last real token of the sweep direction.
    last: Var,
}

fn sweep<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    lengths: &[usize],
    p: &LstmParams,
    reverse: bool,
) -> Result<Sweep, TensorError> {
    let s = tape.shape(x).to_vec();
    let (b, l, e) = (s[0], s[1], s[2]);
    let flat = tape.reshape(x, &[b * l, e])?;
    let proj = tape.matmul(flat, p.w_ih)?;
    let proj = tape.reshape(proj, &[b, l, 4 * p.hidden])?;
    let zeros = tape.constant(Tensor::zeros(&[b, p.hidden]));
    let (mut h, mut c) = (zeros, zeros);
    let mut outs = vec![zeros; l];
    let order: Vec<usize> = if reverse {
        (0..l).rev().collect()
    } else {
        (0..l).collect()
    };
    for t in order {
        let keep: Vec<bool> = lengths.iter().map(|&n| t < n).collect();
        if !keep.iter().any(|&k| k) {
            continue;
        }
        let x_t = tape.select_step(proj, t)?;
        let (h_new, c_new) = cell(tape, x_t, h, c, p)?;
        if keep.iter().all(|&k| k) {
            h = h_new;
            c = c_new;
            outs[t] = h;
        } else {
            h = tape.row_select(&keep, h_new, h)?;
            c = tape.row_select(&keep, c_new, c)?;
            outs[t] = tape.row_select(&keep, h, zeros)?;
        }
    }
    let outputs = tape.stack_steps(&outs)?;
    Ok(Sweep { outputs, last: h })
}

fn check_lengths(lengths: &[usize], batch: usize, width: usize) -> Result<(), TensorError> {
    if lengths.len() != batch {
        return Err(TensorError::Shape {
            op: "bilstm",
            lhs: vec![batch, width],
            rhs: vec![lengths.len()],
        });
    }
    if let Some(r) = lengths.iter().position(|&n| n == 0 || n > width) {
        return Err(TensorError::Invalid {
            op: "bilstm",
            msg: format!("row {r} has length {} for width {width}", lengths[r]),
        });
    }
    Ok(())
}

/// Bidirectional encoding of `B×L×E` inputs into `B×L×2d` states, each
/// position `fwd ∥ bwd`; positions at or past a row's length are zero.
pub fn bilstm_encode<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    lengths: &[usize],
    fwd: &LstmParams,
    bwd: &LstmParams,
) -> Result<Var, TensorError> {
    let s = tape.shape(x).to_vec();
    if s.len() != 3 {
        return Err(TensorError::Invalid {
            op: "bilstm",
            msg: format!("input must be B×L×E, got {s:?}"),
        });
    }
    check_lengths(lengths, s[0], s[1])?;
    let f = sweep(tape, x, lengths, fwd, false)?;
    let b = sweep(tape, x, lengths, bwd, true)?;
    tape.concat(&[f.outputs, b.outputs], 2)
}

/// Final states of both directions, `B×2d`: the forward state at the last
/// real token concatenated with the backward state at the first.
pub fn bilstm_final<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    lengths: &[usize],
    fwd: &LstmParams,
    bwd: &LstmParams,
) -> Result<Var, TensorError> {
    let s = tape.shape(x).to_vec();
    if s.len() != 3 {
        return Err(TensorError::Invalid {
            op: "bilstm",
            msg: format!("input must be B×L×E, got {s:?}"),
        });
    }
    check_lengths(lengths, s[0], s[1])?;
    let f = sweep(tape, x, lengths, fwd, false)?;
    let b = sweep(tape, x, lengths, bwd, true)?;
    tape.concat(&[f.last, b.last], 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_params(tape: &mut Tape<f64>, input: usize, d: usize) -> LstmParams {
        LstmParams {
            w_ih: tape.param(Tensor::zeros(&[input, 4 * d])),
            w_hh: tape.param(Tensor::zeros(&[d, 4 * d])),
            bias: tape.param(Tensor::zeros(&[4 * d])),
            hidden: d,
        }
    }

    #[test]
    fn zero_weights_zero_state_stays_zero() {
        let mut tape = Tape::new();
        let p = zero_params(&mut tape, 3, 2);
        let x = tape.constant(Tensor::full(&[2, 3], 0.7));
        let z = tape.constant(Tensor::zeros(&[2, 2]));
        let (h, c) = lstm_step(&mut tape, x, z, z, &p).unwrap();
        assert!(tape.value(h).data().iter().all(|&v| v == 0.0));
        assert!(tape.value(c).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_weights_unit_cell_state() {
        let mut tape = Tape::new();
        let p = zero_params(&mut tape, 1, 1);
        let x = tape.constant(Tensor::zeros(&[1, 1]));
        let h0 = tape.constant(Tensor::zeros(&[1, 1]));
        let c0 = tape.constant(Tensor::full(&[1, 1], 1.0));
        let (h, c) = lstm_step(&mut tape, x, h0, c0, &p).unwrap();
        // gates all 0.5, candidate 0: c = 0.5·1 + 0.5·0, h = 0.5·tanh(0.5)
        assert_eq!(tape.value(c).data()[0], 0.5);
        let expected = 0.5 * 0.5f64.tanh();
        assert!((tape.value(h).data()[0] - expected).abs() < 1e-15);
        assert!((expected - 0.23106).abs() < 1e-5);
    }

    #[test]
    fn lstm_step_shape_errors() {
        let mut tape = Tape::new();
        let p = zero_params(&mut tape, 3, 2);
        let x = tape.constant(Tensor::zeros(&[2, 3]));
        let bad = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(lstm_step(&mut tape, x, bad, bad, &p).is_err());
    }

    #[test]
    fn bilstm_rejects_zero_length() {
        let mut tape = Tape::new();
        let f = zero_params(&mut tape, 2, 2);
        let b = zero_params(&mut tape, 2, 2);
        let x = tape.constant(Tensor::zeros(&[1, 3, 2]));
        assert!(bilstm_encode(&mut tape, x, &[0], &f, &b).is_err());
        assert!(bilstm_encode(&mut tape, x, &[4], &f, &b).is_err());
    }
}
