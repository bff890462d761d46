use crate::autodiff::{Tape, Var};
use crate::error::TensorError;
use crate::nn::params::{glorot, Bound, ParamSet};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One filter group: `weights` is `(h·D)×F`, `bias` is `F`.
#[derive(Clone, Copy, Debug)]
pub struct ConvFilter {
    pub height: usize,
    pub weights: Var,
    pub bias: Var,
}

/// Filters of several heights sliding over the rows of a matrix.
#[derive(Clone, Debug)]
pub struct ConvFilterBank {
    pub filters: Vec<ConvFilter>,
}

impl ConvFilterBank {
    pub fn from_bound(bound: &Bound, prefix: &str, heights: &[usize]) -> Result<Self, TensorError> {
        let filters = heights
            .iter()
            .map(|&h| {
                Ok(ConvFilter {
                    height: h,
                    weights: bound.get(&format!("{prefix}.h{h}.w"))?,
                    bias: bound.get(&format!("{prefix}.h{h}.b"))?,
                })
            })
            .collect::<Result<_, TensorError>>()?;
        Ok(Self { filters })
    }
}

pub fn init_conv<T: Scalar>(
    set: &mut ParamSet<T>,
    prefix: &str,
    heights: &[usize],
    row_width: usize,
    filters: usize,
    rng: &mut SplitMix64,
) {
    for &h in heights {
        set.insert(
            format!("{prefix}.h{h}.w"),
            glorot(h * row_width, filters, rng),
            true,
        );
        set.insert(format!("{prefix}.h{h}.b"), Tensor::zeros(&[filters]), true);
    }
}

/// Convolve every filter over the rows of `x` (`B×L×D`), apply relu, and
/// max-pool each feature map over its first `valid(h)[b]` positions.
/// Output is `B×ΣF`, pooled features concatenated in filter order.
pub fn conv_max_pool<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    bank: &ConvFilterBank,
    valid: impl Fn(usize) -> Vec<usize>,
) -> Result<Var, TensorError> {
    let s = tape.shape(x).to_vec();
    if s.len() != 3 {
        return Err(TensorError::Invalid {
            op: "conv",
            msg: format!("input must be B×L×D, got {s:?}"),
        });
    }
    let (b, l, d) = (s[0], s[1], s[2]);
    let mut pooled = Vec::with_capacity(bank.filters.len());
    for f in &bank.filters {
        let ws = tape.shape(f.weights).to_vec();
        if ws[0] != f.height * d {
            return Err(TensorError::Shape {
                op: "conv",
                lhs: s.clone(),
                rhs: ws,
            });
        }
        let windows = tape.unfold(x, f.height)?;
        let z = tape.matmul(windows, f.weights)?;
        let z = tape.add_bias(z, f.bias)?;
        let c = tape.relu(z)?;
        let positions = l - f.height + 1;
        let c = tape.reshape(c, &[b, positions, ws[1]])?;
        pooled.push(tape.max_steps(c, &valid(f.height))?);
    }
    tape.concat(&pooled, 1)
}

/// The title–content connection extractor: the 2-row matrix
/// `[V_title; V_content]` is convolved by filters of height 1 and 2 and
/// max-pooled per filter.
pub fn connection_conv<T: Scalar>(
    tape: &mut Tape<T>,
    v_title: Var,
    v_content: Var,
    bank: &ConvFilterBank,
) -> Result<Var, TensorError> {
    let (st, sc) = (tape.shape(v_title).to_vec(), tape.shape(v_content).to_vec());
    if st != sc || st.len() != 2 {
        return Err(TensorError::Shape {
            op: "connection_conv",
            lhs: st,
            rhs: sc,
        });
    }
    if let Some(f) = bank.filters.iter().find(|f| f.height == 0 || f.height > 2) {
        return Err(TensorError::Invalid {
            op: "connection_conv",
            msg: format!("filter height {} does not fit two rows", f.height),
        });
    }
    let batch = st[0];
    let v = tape.stack_steps(&[v_title, v_content])?;
    conv_max_pool(tape, v, bank, |h| vec![3 - h; batch])
}
