use crate::autodiff::{Tape, Var};
use crate::error::TensorError;
use crate::nn::params::{glorot, Bound, ParamSet};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Fully connected layer: `w` is `in×out`, `b` is `out`.
#[derive(Clone, Copy, Debug)]
pub struct DenseParams {
    pub w: Var,
    pub b: Var,
}

impl DenseParams {
    pub fn from_bound(bound: &Bound, prefix: &str) -> Result<Self, TensorError> {
        Ok(Self {
            w: bound.get(&format!("{prefix}.w"))?,
            b: bound.get(&format!("{prefix}.b"))?,
        })
    }
}

pub fn init_dense<T: Scalar>(
    set: &mut ParamSet<T>,
    prefix: &str,
    input: usize,
    output: usize,
    rng: &mut SplitMix64,
) {
    set.insert(format!("{prefix}.w"), glorot(input, output, rng), true);
    set.insert(format!("{prefix}.b"), Tensor::zeros(&[output]), true);
}

/// `x·W + b`.
pub fn dense<T: Scalar>(tape: &mut Tape<T>, x: Var, p: &DenseParams) -> Result<Var, TensorError> {
    let xw = tape.matmul(x, p.w)?;
    tape.add_bias(xw, p.b)
}

/// Classifier logits `B×2`.
pub fn dense_logits<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    p: &DenseParams,
) -> Result<Var, TensorError> {
    if tape.shape(p.w).get(1) != Some(&2) {
        return Err(TensorError::Shape {
            op: "dense_logits",
            lhs: tape.shape(x).to_vec(),
            rhs: tape.shape(p.w).to_vec(),
        });
    }
    dense(tape, x, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_bias() {
        let mut tape = Tape::<f64>::new();
        let p = DenseParams {
            w: tape.param(Tensor::zeros(&[3, 2])),
            b: tape.param(Tensor::vector(vec![0.3, -0.3])),
        };
        let x = tape.constant(Tensor::from_rows(&[&[1.0, -5.0, 2.0]]).unwrap());
        let y = dense_logits(&mut tape, x, &p).unwrap();
        assert_eq!(tape.value(y).data(), &[0.3, -0.3]);
    }

    #[test]
    fn identity_weights() {
        let mut tape = Tape::<f64>::new();
        let p = DenseParams {
            w: tape.param(Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap()),
            b: tape.param(Tensor::zeros(&[2])),
        };
        let x = tape.constant(Tensor::from_rows(&[&[1.0, 0.0]]).unwrap());
        let y = dense_logits(&mut tape, x, &p).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 0.0]);
        let bad = tape.constant(Tensor::zeros(&[1, 3]));
        assert!(dense_logits(&mut tape, bad, &p).is_err());
    }
}
