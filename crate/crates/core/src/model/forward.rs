use crate::autodiff::{softmax_rows, Tape, Var};
use crate::error::TensorError;
use crate::model::params::{ModelParams, PartyAParams, EMBEDDING};
use crate::model::spec::{ExtractorKind, Inputs, ModelSpec};
use crate::nn::attention::{attention_pool, AttentionParams};
use crate::nn::conv::{connection_conv, conv_max_pool, ConvFilterBank};
use crate::nn::dense::{dense, dense_logits, DenseParams};
use crate::nn::lstm::{bilstm_encode, bilstm_final, LstmParams};
use crate::nn::{embed, Bound, ParamSet, TokenBatch};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Run one feature extractor over a token batch, giving `B×D`.
pub fn extract<T: Scalar>(
    tape: &mut Tape<T>,
    spec: &ModelSpec,
    bound: &Bound,
    batch: &TokenBatch,
) -> Result<Var, TensorError> {
    if batch.width < spec.min_width() {
        return Err(TensorError::Invalid {
            op: "extract",
            msg: format!("batch width {} below {}", batch.width, spec.min_width()),
        });
    }
    let x = embed(tape, bound.get(EMBEDDING)?, batch)?;
    let lengths = &batch.lengths;
    match spec.extractor {
        ExtractorKind::San => {
            let fwd = LstmParams::from_bound(tape, bound, "fwd")?;
            let bwd = LstmParams::from_bound(tape, bound, "bwd")?;
            let h = bilstm_encode(tape, x, lengths, &fwd, &bwd)?;
            attention_pool(
                tape,
                h,
                lengths,
                &AttentionParams::from_bound(bound, "attn")?,
            )
        }
        ExtractorKind::Rnn => {
            let fwd = LstmParams::from_bound(tape, bound, "fwd")?;
            let bwd = LstmParams::from_bound(tape, bound, "bwd")?;
            bilstm_final(tape, x, lengths, &fwd, &bwd)
        }
        ExtractorKind::Cnn => {
            let bank = ConvFilterBank::from_bound(bound, "conv", &spec.cnn_heights)?;
            conv_max_pool(tape, x, &bank, |h| {
                lengths
                    .iter()
                    .map(|&n| (n + 1).saturating_sub(h).max(1))
                    .collect()
            })
        }
        ExtractorKind::Fasttext => {
            let mean = tape.mean_steps(x, lengths)?;
            dense(tape, mean, &DenseParams::from_bound(bound, "proj")?)
        }
    }
}

/// Everything above the extractors: connection (when enabled) and classifier.
fn head<T: Scalar>(
    tape: &mut Tape<T>,
    spec: &ModelSpec,
    theta3: &Bound,
    theta4: &Bound,
    features: &[Var],
) -> Result<Var, TensorError> {
    let x = match features {
        [vt, vc] if spec.connection => {
            let bank = ConvFilterBank::from_bound(theta3, "conn", &spec.conn_heights)?;
            connection_conv(tape, *vt, *vc, &bank)?
        }
        [v] => *v,
        _ => tape.concat(features, 1)?,
    };
    dense_logits(tape, x, &DenseParams::from_bound(theta4, "cls")?)
}

/// A full forward pass of all four sub-models on one tape.
pub struct ModelForward<T> {
    pub tape: Tape<T>,
    pub logits: Var,
    pub v_title: Option<Var>,
    pub v_content: Option<Var>,
    pub bound: [Bound; 4],
}

impl<T: Scalar> ModelForward<T> {
    pub fn probs(&self) -> Tensor<T> {
        softmax_rows(self.tape.value(self.logits))
    }

    /// Mean cross-entropy; records the loss and backpropagates into every
    /// parameter. Returns the loss and class probabilities.
    pub fn backward(&mut self, labels: &[usize]) -> Result<(T, Tensor<T>), TensorError> {
        let (loss, probs) = self.tape.softmax_cross_entropy(self.logits, labels)?;
        self.tape.backward(loss)?;
        Ok((self.tape.value(loss).data()[0], probs))
    }

    /// Gradients per theta, aligned with each parameter set's entries.
    pub fn grads(&self) -> [Vec<Option<Tensor<T>>>; 4] {
        let [a, b, c, d] = &self.bound;
        [
            a.grads(&self.tape),
            b.grads(&self.tape),
            c.grads(&self.tape),
            d.grads(&self.tape),
        ]
    }
}

fn missing(which: &str) -> TensorError {
    TensorError::Invalid {
        op: "forward",
        msg: format!("model needs a {which} batch"),
    }
}

fn check_rows(title: Option<&TokenBatch>, content: Option<&TokenBatch>) -> Result<(), TensorError> {
    if let (Some(t), Some(c)) = (title, content) {
        if t.batch_size() != c.batch_size() {
            return Err(TensorError::Shape {
                op: "forward",
                lhs: vec![t.batch_size(), t.width],
                rhs: vec![c.batch_size(), c.width],
            });
        }
    }
    Ok(())
}

/// Forward pass of any variant. Inputs the variant does not use may be `None`.
pub fn forward<T: Scalar>(
    spec: &ModelSpec,
    params: &ModelParams<T>,
    title: Option<&TokenBatch>,
    content: Option<&TokenBatch>,
) -> Result<ModelForward<T>, TensorError> {
    spec.validate()?;
    check_rows(title, content)?;
    let mut tape = Tape::new();
    let bound = [
        params.theta1.bind(&mut tape),
        params.theta2.bind(&mut tape),
        params.theta3.bind(&mut tape),
        params.theta4.bind(&mut tape),
    ];
    let (logits, v_title, v_content) = forward_bound(&mut tape, spec, &bound, title, content)?;
    Ok(ModelForward {
        tape,
        logits,
        v_title,
        v_content,
        bound,
    })
}

/// Logits and extractor outputs from θ1..θ4 already recorded on `tape`.
pub fn forward_bound<T: Scalar>(
    tape: &mut Tape<T>,
    spec: &ModelSpec,
    bound: &[Bound; 4],
    title: Option<&TokenBatch>,
    content: Option<&TokenBatch>,
) -> Result<(Var, Option<Var>, Option<Var>), TensorError> {
    check_rows(title, content)?;
    let [b1, b2, b3, b4] = bound;
    let v_title = match spec.uses_title() {
        true => Some(extract(
            tape,
            spec,
            b1,
            title.ok_or_else(|| missing("title"))?,
        )?),
        false => None,
    };
    let v_content = match spec.uses_content() {
        true => Some(extract(
            tape,
            spec,
            b2,
            content.ok_or_else(|| missing("content"))?,
        )?),
        false => None,
    };
    let features: Vec<Var> = v_title.iter().chain(v_content.iter()).copied().collect();
    let logits = head(tape, spec, b3, b4, &features)?;
    Ok((logits, v_title, v_content))
}

/// Forward pass of a title-and-content model (the HHN and the paired baselines).
pub fn hhn_forward<T: Scalar>(
    spec: &ModelSpec,
    params: &ModelParams<T>,
    title: &TokenBatch,
    content: &TokenBatch,
) -> Result<ModelForward<T>, TensorError> {
    if spec.inputs != Inputs::Both {
        return Err(TensorError::Invalid {
            op: "hhn_forward",
            msg: "model must read both inputs".into(),
        });
    }
    forward(spec, params, Some(title), Some(content))
}

/// Forward pass of a one-input baseline.
pub fn single_view_forward<T: Scalar>(
    spec: &ModelSpec,
    params: &ModelParams<T>,
    batch: &TokenBatch,
) -> Result<ModelForward<T>, TensorError> {
    match spec.inputs {
        Inputs::TitleOnly => forward(spec, params, Some(batch), None),
        Inputs::ContentOnly => forward(spec, params, None, Some(batch)),
        Inputs::Both => Err(TensorError::Invalid {
            op: "single_view_forward",
            msg: "model reads both inputs".into(),
        }),
    }
}

/// The content side's share of a step: θ2 only.
pub struct ContentForward<T> {
    pub tape: Tape<T>,
    pub v_content: Var,
    pub bound: Bound,
}

impl<T: Scalar> ContentForward<T> {
    pub fn activations(&self) -> &Tensor<T> {
        self.tape.value(self.v_content)
    }

    /// Backpropagate a gradient received for the activations into θ2.
    pub fn backward_injected(
        &mut self,
        grad: &Tensor<T>,
    ) -> Result<Vec<Option<Tensor<T>>>, TensorError> {
        self.tape.backward_from(self.v_content, grad)?;
        Ok(self.bound.grads(&self.tape))
    }
}

pub fn party_b_forward<T: Scalar>(
    spec: &ModelSpec,
    theta2: &ParamSet<T>,
    content: &TokenBatch,
) -> Result<ContentForward<T>, TensorError> {
    spec.validate()?;
    let mut tape = Tape::new();
    let bound = theta2.bind(&mut tape);
    let v_content = extract(&mut tape, spec, &bound, content)?;
    Ok(ContentForward {
        tape,
        v_content,
        bound,
    })
}

/// The title side's share of a step, with received content activations
/// treated as a differentiable input.
pub struct TitleForward<T> {
    pub tape: Tape<T>,
    pub logits: Var,
    pub v_content: Var,
    pub bound: [Bound; 3],
}

pub struct TitleStep<T> {
    pub loss: T,
    pub probs: Tensor<T>,
    /// Gradient of the loss with respect to the received activations.
    pub d_content: Tensor<T>,
    /// Gradients for θ1, θ3, θ4.
    pub grads: [Vec<Option<Tensor<T>>>; 3],
}

pub fn party_a_forward<T: Scalar>(
    spec: &ModelSpec,
    params: &PartyAParams<T>,
    title: &TokenBatch,
    v_content: &Tensor<T>,
) -> Result<TitleForward<T>, TensorError> {
    spec.validate()?;
    if spec.inputs != Inputs::Both {
        return Err(TensorError::Invalid {
            op: "party_a_forward",
            msg: "split training needs a two-input model".into(),
        });
    }
    let want = [title.batch_size(), spec.feature_width()];
    if v_content.shape() != want {
        return Err(TensorError::Shape {
            op: "party_a_forward",
            lhs: want.to_vec(),
            rhs: v_content.shape().to_vec(),
        });
    }
    let mut tape = Tape::new();
    let b1 = params.theta1.bind(&mut tape);
    let b3 = params.theta3.bind(&mut tape);
    let b4 = params.theta4.bind(&mut tape);
    let vc = tape.leaf(v_content.clone(), true);
    let vt = extract(&mut tape, spec, &b1, title)?;
    let logits = head(&mut tape, spec, &b3, &b4, &[vt, vc])?;
    Ok(TitleForward {
        tape,
        logits,
        v_content: vc,
        bound: [b1, b3, b4],
    })
}

impl<T: Scalar> TitleForward<T> {
    pub fn probs(&self) -> Tensor<T> {
        softmax_rows(self.tape.value(self.logits))
    }

    pub fn backward(mut self, labels: &[usize]) -> Result<TitleStep<T>, TensorError> {
        let (loss, probs) = self.tape.softmax_cross_entropy(self.logits, labels)?;
        self.tape.backward(loss)?;
        let d_content = self
            .tape
            .grad(self.v_content)
            .unwrap_or_else(|| Tensor::zeros(self.tape.shape(self.v_content)));
        let [a, b, c] = &self.bound;
        Ok(TitleStep {
            loss: self.tape.value(loss).data()[0],
            probs,
            d_content,
            grads: [
                a.grads(&self.tape),
                b.grads(&self.tape),
                c.grads(&self.tape),
            ],
        })
    }
}
