use crate::error::Error;
use crate::nn::ParamSet;
use crate::runtime::config::AdamConfig;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Adam moments for a list of parameter sets. One step counter covers all of
/// them; frozen tensors have no moments.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Vec<Option<Tensor<T>>>>,
    pub v: Vec<Vec<Option<Tensor<T>>>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(sets: &[&ParamSet<T>]) -> Self {
        let zeros = || {
            sets.iter()
                .map(|s| {
                    s.entries()
                        .iter()
                        .map(|e| e.trainable.then(|| Tensor::zeros(e.value.shape())))
                        .collect()
                })
                .collect()
        };
        Self {
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> AdamState<U> {
        let c = |x: &Vec<Vec<Option<Tensor<T>>>>| {
            x.iter()
                .map(|s| s.iter().map(|t| t.as_ref().map(Tensor::cast)).collect())
                .collect()
        };
        AdamState {
            step: self.step,
            m: c(&self.m),
            v: c(&self.v),
        }
    }

    pub fn bit_eq(&self, other: &Self) -> bool {
        let same = |a: &Vec<Vec<Option<Tensor<T>>>>, b: &Vec<Vec<Option<Tensor<T>>>>| {
            a.len() == b.len()
                && a.iter().zip(b).all(|(x, y)| {
                    x.len() == y.len()
                        && x.iter().zip(y).all(|(p, q)| match (p, q) {
                            (Some(p), Some(q)) => p.bit_eq(q),
                            (None, None) => true,
                            _ => false,
                        })
                })
        };
        self.step == other.step && same(&self.m, &other.m) && same(&self.v, &other.v)
    }
}

/// One Adam update of every trainable tensor, in set and entry order.
/// A trainable tensor without a gradient is updated with a zero gradient.
pub fn adam_step<T: Scalar>(
    cfg: &AdamConfig,
    state: &mut AdamState<T>,
    sets: &mut [&mut ParamSet<T>],
    grads: &[Vec<Option<Tensor<T>>>],
) -> Result<(), Error> {
    if sets.len() != grads.len() || sets.len() != state.m.len() {
        return Err(Error::Config(format!(
            "optimizer built for {} parameter sets, got {} sets and {} gradient lists",
            state.m.len(),
            sets.len(),
            grads.len()
        )));
    }
    for (s, g) in sets.iter().zip(grads) {
        if s.len() != g.len() {
            return Err(Error::Config(
                "gradient list does not match parameter set".into(),
            ));
        }
        for (e, g) in s.entries().iter().zip(g) {
            if let Some(g) = g {
                if g.shape() != e.value.shape() {
                    return Err(Error::Config(format!(
                        "gradient shape mismatch for {}",
                        e.name
                    )));
                }
                if !g.all_finite() {
                    return Err(Error::NonFinite {
                        what: "gradient",
                        epoch: 0,
                        batch: 0,
                    });
                }
            }
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let b1 = T::lit(cfg.beta1);
    let b2 = T::lit(cfg.beta2);
    let one_b1 = T::lit(1.0 - cfg.beta1);
    let one_b2 = T::lit(1.0 - cfg.beta2);
    let bc1 = T::lit(1.0 - cfg.beta1.powi(t));
    let bc2 = T::lit(1.0 - cfg.beta2.powi(t));
    let lr = T::lit(cfg.lr);
    let eps = T::lit(cfg.eps);
    for (si, set) in sets.iter_mut().enumerate() {
        for (ei, entry) in set.entries_mut().iter_mut().enumerate() {
            if !entry.trainable {
                continue;
            }
            let (Some(m), Some(v)) = (&mut state.m[si][ei], &mut state.v[si][ei]) else {
                return Err(Error::Config(format!(
                    "no optimizer moments for {}",
                    entry.name
                )));
            };
            let g = grads[si][ei].as_ref().map(Tensor::data);
            let w = entry.value.data_mut();
            for k in 0..w.len() {
                let gk = g.map_or(T::zero(), |g| g[k]);
                let mk = b1 * m.data()[k] + one_b1 * gk;
                let vk = b2 * v.data()[k] + one_b2 * gk * gk;
                m.data_mut()[k] = mk;
                v.data_mut()[k] = vk;
                let m_hat = mk / bc1;
                let v_hat = vk / bc2;
                w[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
    Ok(())
}
