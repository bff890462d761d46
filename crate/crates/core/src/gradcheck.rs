//! Central finite-difference checks of the tape's gradients at f64.
//!
//! Every case builds a scalar loss `sum(out ⊙ R)` for a fixed random `R`,
//! so each output element contributes to the check with its own weight.

use crate::autodiff::{Tape, Var};
use crate::error::TensorError;
use crate::model::{forward_bound, init_theta, ExtractorKind, Inputs, ModelSpec, Theta};
use crate::nn::attention::{attention_pool, AttentionParams};
use crate::nn::conv::{connection_conv, conv_max_pool, init_conv, ConvFilterBank};
use crate::nn::dense::{dense, dense_logits, init_dense, DenseParams};
use crate::nn::lstm::{bilstm_encode, bilstm_final, init_lstm, lstm_step, LstmParams};
use crate::nn::params::uniform;
use crate::nn::{embed, Bound, ParamSet, TokenBatch};
use crate::rng::{mix, SplitMix64};
use crate::tensor::Tensor;

/// Step of the central difference.
pub const EPSILON: f64 = 1e-5;
/// Threshold for single ops and single layers.
pub const OP_TOLERANCE: f64 = 1e-4;
/// Threshold for recurrent layers and whole models.
pub const COMPOSED_TOLERANCE: f64 = 1e-3;

/// A differentiable input of a check.
#[derive(Clone, Debug)]
pub struct Input {
    pub name: String,
    pub value: Tensor<f64>,
}

impl Input {
    pub fn new(name: impl Into<String>, value: Tensor<f64>) -> Self {
        Self {
            name: name.into(),
            value,
        }
    }
}

/// `‖a − n‖ / max(‖a‖ + ‖n‖, 1e-12)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    let scale = norm(&mut analytic.iter().copied()) + norm(&mut numeric.iter().copied());
    diff / scale.max(1e-12)
}

fn weighted_loss<F>(
    inputs: &[Tensor<f64>],
    weights: Option<&Tensor<f64>>,
    build: &F,
) -> Result<(Tape<f64>, Var, Vec<Var>, Tensor<f64>), TensorError>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, TensorError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = build(&mut tape, &vars)?;
    let r = match weights {
        Some(r) => r.clone(),
        None => Tensor::zeros(tape.shape(out)),
    };
    let rv = tape.constant(r.clone());
    let prod = tape.mul(out, rv)?;
    let loss = tape.sum(prod)?;
    Ok((tape, loss, vars, r))
}

/// Compare analytic and central-difference gradients of `sum(build(x) ⊙ R)`
/// for every input. Returns the relative error per input, in order.
pub fn check_gradients<F>(
    inputs: &[Input],
    seed: u64,
    build: F,
) -> Result<Vec<(String, f64)>, TensorError>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, TensorError>,
{
    let values: Vec<Tensor<f64>> = inputs.iter().map(|i| i.value.clone()).collect();
    let (probe, _, _, zeros) = weighted_loss(&values, None, &build)?;
    drop(probe);
    let mut rng = SplitMix64::new(mix(seed, 0x6C05_5EED));
    let r = uniform::<f64>(zeros.shape(), 1.0, &mut rng);

    let (mut tape, loss, vars, _) = weighted_loss(&values, Some(&r), &build)?;
    tape.backward(loss)?;
    let eval = |vals: &[Tensor<f64>]| -> Result<f64, TensorError> {
        let (tape, loss, _, _) = weighted_loss(vals, Some(&r), &build)?;
        Ok(tape.value(loss).data()[0])
    };

    let mut report = Vec::with_capacity(inputs.len());
    for (k, input) in inputs.iter().enumerate() {
        let analytic = tape
            .grad(vars[k])
            .map(|g| g.into_data())
            .unwrap_or_else(|| vec![0.0; input.value.len()]);
        let mut numeric = Vec::with_capacity(input.value.len());
        let mut work = values.clone();
        for j in 0..input.value.len() {
            let x = values[k].data()[j];
            work[k].data_mut()[j] = x + EPSILON;
            let up = eval(&work)?;
            work[k].data_mut()[j] = x - EPSILON;
            let down = eval(&work)?;
            work[k].data_mut()[j] = x;
            numeric.push((up - down) / (2.0 * EPSILON));
        }
        report.push((input.name.clone(), relative_error(&analytic, &numeric)));
    }
    Ok(report)
}

/// Outcome of one case at one seed.
#[derive(Clone, Debug)]
pub struct CaseReport {
    pub case: &'static str,
    pub seed: u64,
    pub tolerance: f64,
    pub errors: Vec<(String, f64)>,
}

impl CaseReport {
    pub fn max_error(&self) -> f64 {
        self.errors.iter().map(|e| e.1).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.errors.iter().all(|e| e.1 < self.tolerance)
    }
}

/// A named check runnable at any seed.
#[derive(Clone, Copy)]
pub struct GradCase {
    pub name: &'static str,
    pub tolerance: f64,
    run: fn(u64) -> Result<Vec<(String, f64)>, TensorError>,
}

impl GradCase {
    pub fn run(&self, seed: u64) -> Result<CaseReport, TensorError> {
        Ok(CaseReport {
            case: self.name,
            seed,
            tolerance: self.tolerance,
            errors: (self.run)(seed)?,
        })
    }
}

impl std::fmt::Debug for GradCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GradCase")
            .field("name", &self.name)
            .field("tolerance", &self.tolerance)
            .finish()
    }
}

fn rng_for(seed: u64) -> SplitMix64 {
    SplitMix64::new(mix(seed, 0x6C05_0001))
}

fn rand(shape: &[usize], rng: &mut SplitMix64) -> Tensor<f64> {
    uniform(shape, 1.0, rng)
}

/// Uniform values kept at least `gap` away from zero, for relu inputs.
fn away_from_zero(shape: &[usize], gap: f64, rng: &mut SplitMix64) -> Tensor<f64> {
    let mut t = rand(shape, rng);
    for v in t.data_mut() {
        *v = v.signum() * (gap + v.abs());
    }
    t
}

fn inputs(list: Vec<(&str, Tensor<f64>)>) -> Vec<Input> {
    list.into_iter().map(|(n, t)| Input::new(n, t)).collect()
}

fn op_matmul(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    let mut r = rng_for(seed);
    let xs = inputs(vec![
        ("a", rand(&[3, 4], &mut r)),
        ("b", rand(&[4, 2], &mut r)),
    ]);
    check_gradients(&xs, seed, |t, v| t.matmul(v[0], v[1]))
}

fn op_add(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    let mut r = rng_for(seed);
    let xs = inputs(vec![
        ("a", rand(&[3, 4], &mut r)),
        ("b", rand(&[3, 4], &mut r)),
    ]);
    check_gradients(&xs, seed, |t, v| t.add(v[0], v[1]))
}

fn op_mul(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    let mut r = rng_for(seed);
    let xs = inputs(vec![
        ("a", rand(&[3, 4], &mut r)),
        ("b", rand(&[3, 4], &mut r)),
    ]);
    check_gradients(&xs, seed, |t, v| t.mul(v[0], v[1]))
}

fn op_tanh(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    let mut r = rng_for(seed);
    let xs = inputs(vec![("x", uniform(&[3, 4], 2.0, &mut r))]);
    check_gradients(&xs, seed, |t, v| t.tanh(v[0]))
}

fn op_sigmoid(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    let mut r = rng_for(seed);
    let xs = inputs(vec![("x", uniform(&[3, 4], 3.0, &mut r))]);
    check_gradients(&xs, seed, |t, v| t.sigmoid(v[0]))
}

fn op_relu(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    let mut r = rng_for(seed);
    let xs = inputs(vec![("x", away_from_zero(&[3, 4], 0.05, &mut r))]);
    check_gradients(&xs, seed, |t, v| t.relu(v[0]))
}

fn op_add_bias(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    let mut r = rng_for(seed);
    let xs = inputs(vec![
        ("x", rand(&[2, 3, 4], &mut r)),
        ("bias", rand(&[4], &mut r)),
    ]);
    check_gradients(&xs, seed, |t, v| t.add_bias(v[0], v[1]))
}

fn op_sum(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    let mut r = rng_for(seed);
    let xs = inputs(vec![("x", rand(&[3, 4], &mut r))]);
    check_gradients(&xs, seed, |t, v| {
        let sq = t.mul(v[0], v[0])?;
        t.sum(sq)
    })
}

fn op_concat(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    let mut r = rng_for(seed);
    let xs = inputs(vec![
        ("a", rand(&[2, 3, 2], &mut r)),
        ("b", rand(&[2, 3, 3], &mut r)),
        ("c", rand(&[2, 3, 2], &mut r)),
    ]);
    check_gradients(&xs, seed, |t, v| {
        let last = t.concat(&[v[0], v[1]], 2)?;
        let rows = t.concat(&[v[0], v[2]], 0)?;
        let mid = t.concat(&[v[0], v[2]], 1)?;
        let a = t.reshape(last, &[30])?;
        let b = t.reshape(rows, &[24])?;
        let c = t.reshape(mid, &[24])?;
        t.concat(&[a, b, c], 0)
    })
}

fn op_slice_last(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    let mut r = rng_for(seed);
    let xs = inputs(vec![("x", rand(&[3, 6], &mut r))]);
    check_gradients(&xs, seed, |t, v| {
        let a = t.slice_last(v[0], 1, 3)?;
        let b = t.slice_last(v[0], 2, 3)?;
        t.mul(a, b)
    })
}

fn op_reshape(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    let mut r = rng_for(seed);
    let xs = inputs(vec![
        ("x", rand(&[2, 6], &mut r)),
        ("y", rand(&[3, 4], &mut r)),
    ]);
    check_gradients(&xs, seed, |t, v| {
        let x = t.reshape(v[0], &[3, 4])?;
        t.mul(x, v[1])
    })
}

fn op_softmax_cross_entropy(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    let mut r = rng_for(seed);
    let labels: Vec<usize> = (0..4).map(|_| r.below(2) as usize).collect();
    let xs = inputs(vec![("logits", uniform(&[4, 2], 3.0, &mut r))]);
    check_gradients(&xs, seed, move |t, v| {
        Ok(t.softmax_cross_entropy(v[0], &labels)?.0)
    })
}

fn op_gather(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    let mut r = rng_for(seed);
    // ids avoid the pad row, which is never trained
    let ids: Vec<usize> = (0..6).map(|_| 1 + r.below(4) as usize).collect();
    let xs = inputs(vec![("table", rand(&[5, 3], &mut r))]);
    check_gradients(&xs, seed, move |t, v| t.gather(v[0], &ids, 2, 3))
}

fn op_select_step(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    let mut r = rng_for(seed);
    let xs = inputs(vec![("x", rand(&[2, 3, 4], &mut r))]);
    check_gradients(&xs, seed, |t, v| {
        let a = t.select_step(v[0], 0)?;
        let b = t.select_step(v[0], 2)?;
        t.mul(a, b)
    })
}

fn op_stack_steps(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    let mut r = rng_for(seed);
    let xs = inputs(vec![
        ("a", rand(&[2, 4], &mut r)),
        ("b", rand(&[2, 4], &mut r)),
        ("c", rand(&[2, 4], &mut r)),
    ]);
    check_gradients(&xs, seed, |t, v| t.stack_steps(&[v[0], v[1], v[2], v[0]]))
}

fn op_row_select(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    let mut r = rng_for(seed);
    let xs = inputs(vec![
        ("on", rand(&[3, 4], &mut r)),
        ("off", rand(&[3, 4], &mut r)),
    ]);
    check_gradients(&xs, seed, |t, v| {
        t.row_select(&[true, false, true], v[0], v[1])
    })
}

fn op_masked_softmax(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    let mut r = rng_for(seed);
    let xs = inputs(vec![("scores", uniform(&[3, 4], 2.0, &mut r))]);
    check_gradients(&xs, seed, |t, v| t.masked_softmax(v[0], &[4, 2, 1]))
}

fn op_weighted_sum(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    let mut r = rng_for(seed);
    let xs = inputs(vec![
        ("states", rand(&[2, 3, 4], &mut r)),
        ("weights", rand(&[2, 3], &mut r)),
    ]);
    check_gradients(&xs, seed, |t, v| t.weighted_sum(v[0], v[1]))
}

fn op_unfold(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    let mut r = rng_for(seed);
    let xs = inputs(vec![("x", rand(&[2, 4, 3], &mut r))]);
    check_gradients(&xs, seed, |t, v| {
        let a = t.unfold(v[0], 2)?;
        let a = t.reshape(a, &[36])?;
        let b = t.unfold(v[0], 3)?;
        let b = t.reshape(b, &[36])?;
        t.mul(a, b)
    })
}

fn op_max_steps(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    let mut r = rng_for(seed);
    let xs = inputs(vec![("x", rand(&[2, 3, 4], &mut r))]);
    check_gradients(&xs, seed, |t, v| t.max_steps(v[0], &[3, 2]))
}

fn op_mean_steps(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    let mut r = rng_for(seed);
    let xs = inputs(vec![("x", rand(&[2, 3, 4], &mut r))]);
    check_gradients(&xs, seed, |t, v| t.mean_steps(v[0], &[3, 1]))
}

/// Every parameter of `set` as a trainable input.
fn set_inputs(set: &ParamSet<f64>) -> Vec<Input> {
    set.entries()
        .iter()
        .map(|e| Input::new(e.name.clone(), e.value.clone()))
        .collect()
}

fn rebind(names: &[String], vars: &[Var]) -> Bound {
    Bound::from_vars(names.to_vec(), vars.to_vec())
}

fn names_of(inputs: &[Input]) -> Vec<String> {
    inputs.iter().map(|i| i.name.clone()).collect()
}

fn random_batch(rng: &mut SplitMix64, lengths: &[usize], width: usize, vocab: usize) -> TokenBatch {
    let seqs: Vec<Vec<u32>> = lengths
        .iter()
        .map(|&n| {
            (0..n)
                .map(|_| 2 + rng.below(vocab as u64 - 2) as u32)
                .collect()
        })
        .collect();
    TokenBatch::with_width(&seqs, width).expect("lengths fit width")
}

fn layer_embedding(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    let mut r = rng_for(seed);
    let batch = random_batch(&mut r, &[3, 3], 3, 6);
    let xs = inputs(vec![("embedding", rand(&[6, 4], &mut r))]);
    check_gradients(&xs, seed, move |t, v| embed(t, v[0], &batch))
}

fn lstm_set(rng: &mut SplitMix64, prefixes: &[&str], input: usize, hidden: usize) -> ParamSet<f64> {
    let mut set = ParamSet::new();
    for p in prefixes {
        init_lstm(&mut set, p, input, hidden, rng);
        // perturb the biases so the check does not sit on the init values
        let b = set.get_mut(&format!("{p}.bias")).expect("bias");
        for v in b.data_mut() {
            *v += rng.symmetric(0.5);
        }
    }
    set
}

fn layer_lstm_step(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    let mut r = rng_for(seed);
    let set = lstm_set(&mut r, &["cell"], 3, 4);
    let mut xs = set_inputs(&set);
    xs.push(Input::new("x", rand(&[2, 3], &mut r)));
    xs.push(Input::new("h", rand(&[2, 4], &mut r)));
    xs.push(Input::new("c", rand(&[2, 4], &mut r)));
    let names = names_of(&xs);
    check_gradients(&xs, seed, move |t, v| {
        let b = rebind(&names[..3], &v[..3]);
        let p = LstmParams::from_bound(t, &b, "cell")?;
        let (h, c) = lstm_step(t, v[3], v[4], v[5], &p)?;
        t.concat(&[h, c], 1)
    })
}

fn layer_bilstm(seed: u64, last: bool) -> Result<Vec<(String, f64)>, TensorError> {
    let mut r = rng_for(seed);
    let set = lstm_set(&mut r, &["fwd", "bwd"], 3, 2);
    let mut xs = set_inputs(&set);
    xs.push(Input::new("x", rand(&[2, 3, 3], &mut r)));
    let names = names_of(&xs);
    check_gradients(&xs, seed, move |t, v| {
        let b = rebind(&names[..6], &v[..6]);
        let fwd = LstmParams::from_bound(t, &b, "fwd")?;
        let bwd = LstmParams::from_bound(t, &b, "bwd")?;
        match last {
            false => bilstm_encode(t, v[6], &[3, 2], &fwd, &bwd),
            true => bilstm_final(t, v[6], &[3, 2], &fwd, &bwd),
        }
    })
}

fn layer_bilstm_encode(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    layer_bilstm(seed, false)
}

fn layer_bilstm_final(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    layer_bilstm(seed, true)
}

fn layer_attention(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    let mut r = rng_for(seed);
    let xs = inputs(vec![
        ("attn.w_a", rand(&[4, 4], &mut r)),
        ("attn.context", rand(&[4, 1], &mut r)),
        ("states", rand(&[2, 3, 4], &mut r)),
    ]);
    let names = names_of(&xs);
    check_gradients(&xs, seed, move |t, v| {
        let p = AttentionParams::from_bound(&rebind(&names[..2], &v[..2]), "attn")?;
        attention_pool(t, v[2], &[3, 2], &p)
    })
}

fn conv_set(
    rng: &mut SplitMix64,
    heights: &[usize],
    width: usize,
    filters: usize,
) -> ParamSet<f64> {
    let mut set = ParamSet::new();
    init_conv(&mut set, "conv", heights, width, filters, rng);
    for h in heights {
        let b = set.get_mut(&format!("conv.h{h}.b")).expect("bias");
        for v in b.data_mut() {
            *v = 0.5 + rng.symmetric(0.25);
        }
    }
    set
}

fn layer_conv(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    let mut r = rng_for(seed);
    let heights = [1, 2, 3];
    let set = conv_set(&mut r, &heights, 3, 2);
    let mut xs = set_inputs(&set);
    xs.push(Input::new("x", rand(&[2, 4, 3], &mut r)));
    let names = names_of(&xs);
    let n = names.len() - 1;
    check_gradients(&xs, seed, move |t, v| {
        let bank = ConvFilterBank::from_bound(&rebind(&names[..n], &v[..n]), "conv", &heights)?;
        conv_max_pool(t, v[n], &bank, |h| vec![4 + 1 - h, (3 + 1 - h).max(1)])
    })
}

fn layer_connection(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    let mut r = rng_for(seed);
    let heights = [1, 2];
    let set = conv_set(&mut r, &heights, 4, 3);
    let mut xs = set_inputs(&set);
    xs.push(Input::new("v_title", rand(&[2, 4], &mut r)));
    xs.push(Input::new("v_content", rand(&[2, 4], &mut r)));
    let names = names_of(&xs);
    let n = names.len() - 2;
    check_gradients(&xs, seed, move |t, v| {
        let bank = ConvFilterBank::from_bound(&rebind(&names[..n], &v[..n]), "conv", &heights)?;
        connection_conv(t, v[n], v[n + 1], &bank)
    })
}

fn dense_case(seed: u64, logits: bool) -> Result<Vec<(String, f64)>, TensorError> {
    let mut r = rng_for(seed);
    let mut set = ParamSet::new();
    init_dense(&mut set, "d", 5, if logits { 2 } else { 3 }, &mut r);
    let mut xs = set_inputs(&set);
    xs[1].value = rand(xs[1].value.shape(), &mut r);
    xs.push(Input::new("x", rand(&[3, 5], &mut r)));
    let names = names_of(&xs);
    check_gradients(&xs, seed, move |t, v| {
        let p = DenseParams::from_bound(&rebind(&names[..2], &v[..2]), "d")?;
        match logits {
            true => dense_logits(t, v[2], &p),
            false => dense(t, v[2], &p),
        }
    })
}

fn layer_dense(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    dense_case(seed, false)
}

fn layer_dense_logits(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    dense_case(seed, true)
}

fn small_spec(spec: ModelSpec) -> ModelSpec {
    let mut spec = spec.with_dims(4, 3, 3);
    spec.cnn_heights = vec![1, 2, 3];
    spec.train_embeddings = true;
    spec
}

/// Random ragged batch; CNN batches use full rows so no pad token enters a window.
fn model_batch(spec: &ModelSpec, rng: &mut SplitMix64, vocab: usize) -> TokenBatch {
    let width = 4;
    let lengths = match spec.extractor {
        ExtractorKind::Cnn => vec![width, width],
        _ => vec![width, 2],
    };
    random_batch(rng, &lengths, width, vocab)
}

fn trainable(mut set: ParamSet<f64>, rng: &mut SplitMix64) -> ParamSet<f64> {
    for e in set.entries_mut() {
        e.trainable = true;
        // zero-initialized biases get random values so relu and max-pool
        // kinks are not hit exactly
        if e.value.data().iter().all(|&v| v == 0.0) && !e.name.starts_with("embedding") {
            e.value = uniform(e.value.shape(), 0.5, rng);
        }
    }
    set
}

fn extractor_case(seed: u64, kind: ExtractorKind) -> Result<Vec<(String, f64)>, TensorError> {
    let spec = small_spec(ModelSpec::single(kind, Inputs::TitleOnly));
    let mut r = rng_for(seed);
    let vocab = 7;
    let set = trainable(init_theta::<f64>(Theta::Title, &spec, vocab, seed)?, &mut r);
    let batch = model_batch(&spec, &mut r, vocab);
    let xs = set_inputs(&set);
    let names = names_of(&xs);
    check_gradients(&xs, seed, move |t, v| {
        let b = rebind(&names, v);
        crate::model::extract(t, &spec, &b, &batch)
    })
}

fn extractor_san(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    extractor_case(seed, ExtractorKind::San)
}

fn extractor_cnn(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    extractor_case(seed, ExtractorKind::Cnn)
}

fn extractor_rnn(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    extractor_case(seed, ExtractorKind::Rnn)
}

fn extractor_fasttext(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    extractor_case(seed, ExtractorKind::Fasttext)
}

/// The whole model with the training loss: every tensor of θ1..θ4 at once.
fn model_case(seed: u64, spec: ModelSpec) -> Result<Vec<(String, f64)>, TensorError> {
    let spec = small_spec(spec);
    let mut r = rng_for(seed);
    let (tv, cv) = (7, 8);
    let thetas = [
        Theta::Title,
        Theta::Content,
        Theta::Connection,
        Theta::Classifier,
    ];
    let mut xs = Vec::new();
    let mut groups = Vec::new();
    for which in thetas {
        let vocab = match which {
            Theta::Title => tv,
            _ => cv,
        };
        let set = trainable(init_theta::<f64>(which, &spec, vocab, seed)?, &mut r);
        let start = xs.len();
        xs.extend(
            set.entries()
                .iter()
                .map(|e| Input::new(format!("{}/{}", which.key(), e.name), e.value.clone())),
        );
        groups.push((start, xs.len()));
    }
    let names: Vec<String> = xs
        .iter()
        .map(|i| {
            i.name
                .split_once('/')
                .map(|p| p.1.to_string())
                .unwrap_or_default()
        })
        .collect();
    let title = model_batch(&spec, &mut r, tv);
    let content = model_batch(&spec, &mut r, cv);
    let labels = vec![r.below(2) as usize, r.below(2) as usize];
    let groups: [(usize, usize); 4] = groups.try_into().expect("four thetas");
    check_gradients(&xs, seed, move |t, v| {
        let bound = groups.map(|(a, b)| rebind(&names[a..b], &v[a..b]));
        let (logits, _, _) = forward_bound(t, &spec, &bound, Some(&title), Some(&content))?;
        Ok(t.softmax_cross_entropy(logits, &labels)?.0)
    })
}

fn model_hhn(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    model_case(seed, ModelSpec::hhn())
}

fn model_concat(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    model_case(seed, ModelSpec::paired(ExtractorKind::San))
}

fn model_title_only(seed: u64) -> Result<Vec<(String, f64)>, TensorError> {
    model_case(
        seed,
        ModelSpec::single(ExtractorKind::Cnn, Inputs::TitleOnly),
    )
}

macro_rules! case {
    ($name:literal, $tol:expr, $f:ident) => {
        GradCase {
            name: $name,
            tolerance: $tol,
            run: $f,
        }
    };
}

/// Every op, layer, extractor and composed model, with its threshold.
pub fn cases() -> Vec<GradCase> {
    vec![
        case!("op/matmul", OP_TOLERANCE, op_matmul),
        case!("op/add", OP_TOLERANCE, op_add),
        case!("op/mul", OP_TOLERANCE, op_mul),
        case!("op/tanh", OP_TOLERANCE, op_tanh),
        case!("op/sigmoid", OP_TOLERANCE, op_sigmoid),
        case!("op/relu", OP_TOLERANCE, op_relu),
        case!("op/add_bias", OP_TOLERANCE, op_add_bias),
        case!("op/sum", OP_TOLERANCE, op_sum),
        case!("op/concat", OP_TOLERANCE, op_concat),
        case!("op/slice_last", OP_TOLERANCE, op_slice_last),
        case!("op/reshape", OP_TOLERANCE, op_reshape),
        case!(
            "op/softmax_cross_entropy",
            OP_TOLERANCE,
            op_softmax_cross_entropy
        ),
        case!("op/gather", OP_TOLERANCE, op_gather),
        case!("op/select_step", OP_TOLERANCE, op_select_step),
        case!("op/stack_steps", OP_TOLERANCE, op_stack_steps),
        case!("op/row_select", OP_TOLERANCE, op_row_select),
        case!("op/masked_softmax", OP_TOLERANCE, op_masked_softmax),
        case!("op/weighted_sum", OP_TOLERANCE, op_weighted_sum),
        case!("op/unfold", OP_TOLERANCE, op_unfold),
        case!("op/max_steps", OP_TOLERANCE, op_max_steps),
        case!("op/mean_steps", OP_TOLERANCE, op_mean_steps),
        case!("layer/embedding", OP_TOLERANCE, layer_embedding),
        case!("layer/lstm_step", COMPOSED_TOLERANCE, layer_lstm_step),
        case!(
            "layer/bilstm_encode",
            COMPOSED_TOLERANCE,
            layer_bilstm_encode
        ),
        case!("layer/bilstm_final", COMPOSED_TOLERANCE, layer_bilstm_final),
        case!("layer/attention_pool", OP_TOLERANCE, layer_attention),
        case!("layer/conv_max_pool", OP_TOLERANCE, layer_conv),
        case!("layer/connection_conv", OP_TOLERANCE, layer_connection),
        case!("layer/dense", OP_TOLERANCE, layer_dense),
        case!("layer/dense_logits", OP_TOLERANCE, layer_dense_logits),
        case!("extractor/san", COMPOSED_TOLERANCE, extractor_san),
        case!("extractor/cnn", COMPOSED_TOLERANCE, extractor_cnn),
        case!("extractor/rnn", COMPOSED_TOLERANCE, extractor_rnn),
        case!("extractor/fasttext", COMPOSED_TOLERANCE, extractor_fasttext),
        case!("model/hhn", COMPOSED_TOLERANCE, model_hhn),
        case!("model/concat", COMPOSED_TOLERANCE, model_concat),
        case!("model/title_only", COMPOSED_TOLERANCE, model_title_only),
    ]
}

/// Run every case at seeds `0..seeds`.
pub fn run_all(seeds: u64) -> Result<Vec<CaseReport>, TensorError> {
    let mut out = Vec::new();
    for case in cases() {
        for seed in 0..seeds {
            out.push(case.run(seed)?);
        }
    }
    Ok(out)
}
