use fedsplit::gradcheck::relative_error;
use fedsplit::model::{
    hhn_forward, party_a_forward, party_b_forward, single_view_forward, ExtractorKind, Inputs,
    ModelParams, ModelSpec, Theta,
};
use fedsplit::nn::{ParamSet, TokenBatch};
use fedsplit::rng::SplitMix64;
use proptest::prelude::*;

// Plain-loop HHN on one unpadded sample: embeddings, BiLSTM, attention,
// connection convolution over the stacked [title; content] rows, dense, softmax.
mod oracle {
    use super::*;

    pub struct P<'a>(pub &'a ParamSet<f64>);

    impl P<'_> {
        fn m(&self, name: &str) -> (Vec<f64>, usize) {
            let t = self.0.get(name).unwrap_or_else(|| panic!("{name}"));
            (t.data().to_vec(), *t.shape().last().unwrap())
        }
    }

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    fn vec_mat(x: &[f64], w: &[f64], cols: usize) -> Vec<f64> {
        (0..cols)
            .map(|j| {
                x.iter()
                    .enumerate()
                    .map(|(i, xi)| xi * w[i * cols + j])
                    .sum()
            })
            .collect()
    }

    fn lstm(p: &P, prefix: &str, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let (wih, g4) = p.m(&format!("{prefix}.w_ih"));
        let (whh, _) = p.m(&format!("{prefix}.w_hh"));
        let (bias, _) = p.m(&format!("{prefix}.bias"));
        let d = g4 / 4;
        let (mut h, mut c) = (vec![0.0; d], vec![0.0; d]);
        let mut out = Vec::new();
        for x in xs {
            let a = vec_mat(x, &wih, g4);
            let r = vec_mat(&h, &whh, g4);
            let z: Vec<f64> = (0..g4).map(|k| a[k] + r[k] + bias[k]).collect();
            for k in 0..d {
                let (i, f, g, o) = (
                    sig(z[k]),
                    sig(z[d + k]),
                    z[2 * d + k].tanh(),
                    sig(z[3 * d + k]),
                );
                c[k] = f * c[k] + i * g;
                h[k] = o * c[k].tanh();
            }
            out.push(h.clone());
        }
        out
    }

    pub fn san(p: &P, tokens: &[u32]) -> Vec<f64> {
        let (emb, e) = p.m("embedding");
        let xs: Vec<Vec<f64>> = tokens
            .iter()
            .map(|&t| emb[t as usize * e..(t as usize + 1) * e].to_vec())
            .collect();
        let f = lstm(p, "fwd", &xs);
        let rev: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
        let mut b = lstm(p, "bwd", &rev);
        b.reverse();
        let hs: Vec<Vec<f64>> = f
            .iter()
            .zip(&b)
            .map(|(x, y)| [x.as_slice(), y].concat())
            .collect();
        let (wa, w) = p.m("attn.w_a");
        let (ctx, _) = p.m("attn.context");
        let scores: Vec<f64> = hs
            .iter()
            .map(|h| {
                vec_mat(h, &wa, w)
                    .iter()
                    .map(|v| v.tanh())
                    .zip(&ctx)
                    .map(|(a, c)| a * c)
                    .sum()
            })
            .collect();
        let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ex: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
        let z: f64 = ex.iter().sum();
        (0..w)
            .map(|k| hs.iter().zip(&ex).map(|(h, a)| h[k] * a / z).sum())
            .collect()
    }

    pub fn probs(
        spec: &ModelSpec,
        params: &ModelParams<f64>,
        title: &[u32],
        content: &[u32],
    ) -> [f64; 2] {
        let vt = san(&P(&params.theta1), title);
        let vc = san(&P(&params.theta2), content);
        let rows = [vt, vc];
        let p3 = P(&params.theta3);
        let mut feats = Vec::new();
        for &h in &spec.conn_heights {
            let (w, f) = p3.m(&format!("conn.h{h}.w"));
            let (b, _) = p3.m(&format!("conn.h{h}.b"));
            let mut best = vec![f64::NEG_INFINITY; f];
            for start in 0..=2 - h {
                let window: Vec<f64> = rows[start..start + h].concat();
                for (j, v) in vec_mat(&window, &w, f).into_iter().enumerate() {
                    best[j] = best[j].max((v + b[j]).max(0.0));
                }
            }
            feats.extend(best);
        }
        let p4 = P(&params.theta4);
        let (w, _) = p4.m("cls.w");
        let (b, _) = p4.m("cls.b");
        let l = vec_mat(&feats, &w, 2);
        let (l0, l1) = (l[0] + b[0], l[1] + b[1]);
        let m = l0.max(l1);
        let (e0, e1) = ((l0 - m).exp(), (l1 - m).exp());
        [e0 / (e0 + e1), e1 / (e0 + e1)]
    }
}

fn spec() -> ModelSpec {
    ModelSpec::hhn().with_dims(4, 3, 3)
}

fn randomized(spec: &ModelSpec, seed: u64) -> ModelParams<f64> {
    let mut p = ModelParams::<f64>::init(spec, 9, 9, seed).unwrap();
    let mut rng = SplitMix64::new(seed ^ 0xABCD);
    for which in [
        Theta::Title,
        Theta::Content,
        Theta::Connection,
        Theta::Classifier,
    ] {
        for e in p.get_mut(which).entries_mut() {
            e.trainable = true;
            for x in e.value.data_mut() {
                *x += rng.symmetric(0.3);
            }
        }
    }
    p
}

#[test]
fn one_sample_matches_a_hand_composed_forward_and_its_finite_differences() {
    let spec = spec();
    let (title, content) = (vec![2u32, 5, 7], vec![3u32, 4]);
    let t = TokenBatch::new(std::slice::from_ref(&title), 1).unwrap();
    let c = TokenBatch::new(std::slice::from_ref(&content), 1).unwrap();
    for seed in 0..5 {
        let params = randomized(&spec, seed);
        let mut f = hhn_forward(&spec, &params, &t, &c).unwrap();
        let want = oracle::probs(&spec, &params, &title, &content);
        let got = f.probs();
        assert!(
            relative_error(got.data(), &want) < 1e-12,
            "{:?} vs {want:?}",
            got.data()
        );

        let label = (seed % 2) as usize;
        f.backward(&[label]).unwrap();
        let grads = f.grads();
        let eps = 1e-6;
        for (k, which) in [
            Theta::Title,
            Theta::Content,
            Theta::Connection,
            Theta::Classifier,
        ]
        .into_iter()
        .enumerate()
        {
            for (i, e) in params.get(which).entries().iter().enumerate() {
                let mut numeric = vec![0.0; e.value.len()];
                for (j, n) in numeric.iter_mut().enumerate() {
                    let mut plus = params.clone();
                    plus.get_mut(which).entries_mut()[i].value.data_mut()[j] += eps;
                    let mut minus = params.clone();
                    minus.get_mut(which).entries_mut()[i].value.data_mut()[j] -= eps;
                    let lp = -oracle::probs(&spec, &plus, &title, &content)[label].ln();
                    let lm = -oracle::probs(&spec, &minus, &title, &content)[label].ln();
                    *n = (lp - lm) / (2.0 * eps);
                }
                let analytic = grads[k][i].as_ref().unwrap();
                let err = relative_error(analytic.data(), &numeric);
                assert!(err < 1e-5, "{which:?} {} err {err}", e.name);
            }
        }
    }
}

#[test]
fn zeroed_head_gives_constant_probabilities() {
    let spec = spec();
    let mut params = randomized(&spec, 3);
    for e in params.get_mut(Theta::Connection).entries_mut() {
        e.value.data_mut().fill(0.0);
    }
    for e in params.get_mut(Theta::Classifier).entries_mut() {
        if e.name != "cls.b" {
            e.value.data_mut().fill(0.0);
        }
    }
    let b = params.theta4.get("cls.b").unwrap().data().to_vec();
    let expect = 1.0 / (1.0 + (b[0] - b[1]).exp());
    let mut rng = SplitMix64::new(1);
    for _ in 0..10 {
        let mut seq = |n: usize| -> Vec<u32> { (0..n).map(|_| 2 + rng.below(7) as u32).collect() };
        let (t, c) = (seq(3), seq(4));
        let f = hhn_forward(
            &spec,
            &params,
            &TokenBatch::new(&[t], 1).unwrap(),
            &TokenBatch::new(&[c], 1).unwrap(),
        )
        .unwrap();
        let p = f.probs();
        assert!((p.at2(0, 1) - expect).abs() < 1e-15);
        assert!((p.at2(0, 0) + p.at2(0, 1) - 1.0).abs() < 1e-15);
    }
}

#[test]
fn dead_content_path_gets_zero_gradient() {
    // height-1 filters with zero weights and a negative bias: relu is off
    // at both rows, so nothing flows back to the content activations
    let mut spec = spec();
    spec.conn_heights = vec![1];
    let mut params = randomized(&spec, 4);
    let d = spec.feature_width();
    params
        .theta3
        .get_mut("conn.h1.w")
        .unwrap()
        .data_mut()
        .fill(0.0);
    params
        .theta3
        .get_mut("conn.h1.b")
        .unwrap()
        .data_mut()
        .fill(-1.0);
    let t = TokenBatch::new(&[vec![2u32, 3], vec![4, 5, 6]], 1).unwrap();
    let c = TokenBatch::new(&[vec![7u32], vec![3, 8]], 1).unwrap();
    let (a, b) = params.split();
    let cf = party_b_forward(&spec, &b.theta2, &c).unwrap();
    let step = party_a_forward(&spec, &a, &t, cf.activations())
        .unwrap()
        .backward(&[1, 0])
        .unwrap();
    assert_eq!(step.d_content.shape(), [2, d]);
    assert!(step.d_content.data().iter().all(|&x| x == 0.0));
}

#[test]
fn parameter_counts_follow_the_dims() {
    let lstm = |e: usize, h: usize| e * 4 * h + h * 4 * h + 4 * h;
    let (tv, cv) = (30, 50);
    for kind in [
        ExtractorKind::San,
        ExtractorKind::Rnn,
        ExtractorKind::Cnn,
        ExtractorKind::Fasttext,
    ] {
        for (inputs, conn) in [
            (Inputs::Both, true),
            (Inputs::Both, false),
            (Inputs::TitleOnly, false),
            (Inputs::ContentOnly, false),
        ] {
            let mut s = ModelSpec::paired(kind).with_dims(10, 6, 5);
            s.inputs = inputs;
            s.connection = conn;
            s.cnn_heights = vec![1, 2, 3];
            s.cnn_filters = 4;
            s.fasttext_dim = 7;
            let (e, h) = (10, 6);
            let body = match kind {
                ExtractorKind::San => 2 * lstm(e, h) + 2 * h * 2 * h + 2 * h,
                ExtractorKind::Rnn => 2 * lstm(e, h),
                ExtractorKind::Cnn => (1 + 2 + 3) * e * 4 + 3 * 4,
                ExtractorKind::Fasttext => e * 7 + 7,
            };
            let d = match kind {
                ExtractorKind::San | ExtractorKind::Rnn => 2 * h,
                ExtractorKind::Cnn => 12,
                ExtractorKind::Fasttext => 7,
            };
            let mut want = 0;
            if inputs != Inputs::ContentOnly {
                want += tv * e + body;
            }
            if inputs != Inputs::TitleOnly {
                want += cv * e + body;
            }
            let cls_in = if conn {
                want += (d * 5 + 5) + (2 * d * 5 + 5);
                10
            } else if inputs == Inputs::Both {
                2 * d
            } else {
                d
            };
            want += cls_in * 2 + 2;
            let p = ModelParams::<f32>::init(&s, tv, cv, 1).unwrap();
            assert_eq!(p.scalar_count(), want, "{kind:?} {inputs:?} {conn}");
        }
    }
}

#[test]
fn fasttext_on_one_token_is_embedding_then_dense() {
    let spec = ModelSpec::single(ExtractorKind::Fasttext, Inputs::TitleOnly).with_dims(4, 3, 2);
    let params = randomized(&spec, 2);
    let f =
        single_view_forward(&spec, &params, &TokenBatch::new(&[vec![5u32]], 1).unwrap()).unwrap();
    let e = params.theta1.get("embedding").unwrap().data()[20..24].to_vec();
    let (pw, pb) = (
        params.theta1.get("proj.w").unwrap(),
        params.theta1.get("proj.b").unwrap(),
    );
    let k = pb.len();
    let hidden: Vec<f64> = (0..k)
        .map(|j| (0..4).map(|i| e[i] * pw.data()[i * k + j]).sum::<f64>() + pb.data()[j])
        .collect();
    let (cw, cb) = (
        params.theta4.get("cls.w").unwrap(),
        params.theta4.get("cls.b").unwrap(),
    );
    let l: Vec<f64> = (0..2)
        .map(|c| {
            (0..k)
                .map(|j| hidden[j] * cw.data()[j * 2 + c])
                .sum::<f64>()
                + cb.data()[c]
        })
        .collect();
    let p1 = 1.0 / (1.0 + (l[0] - l[1]).exp());
    assert!((f.probs().at2(0, 1) - p1).abs() < 1e-14);
}

fn token_rows(max_len: usize) -> impl Strategy<Value = Vec<Vec<u32>>> {
    proptest::collection::vec(proptest::collection::vec(2u32..12, 1..=max_len), 1..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn split_halves_compose_to_the_joint_forward(seed in 0u64..1000, rows in token_rows(5), other in token_rows(6)) {
        let spec = spec();
        let n = rows.len().min(other.len());
        let t = TokenBatch::new(&rows[..n], 1).unwrap();
        let c = TokenBatch::new(&other[..n], 1).unwrap();
        let params = ModelParams::<f32>::init(&spec, 12, 12, seed).unwrap();
        let joint = hhn_forward(&spec, &params, &t, &c).unwrap();
        let (a, b) = params.split();
        let cf = party_b_forward(&spec, &b.theta2, &c).unwrap();
        let af = party_a_forward(&spec, &a, &t, cf.activations()).unwrap();
        prop_assert!(joint.probs().bit_eq(&af.probs()));
    }

    #[test]
    fn argmax_ignores_a_shared_logit_shift(seed in 0u64..1000, shift in -50.0f64..50.0) {
        let spec = spec();
        let mut params = randomized(&spec, seed);
        let t = TokenBatch::new(&[vec![2u32, 3], vec![4, 5, 6]], 1).unwrap();
        let c = TokenBatch::new(&[vec![7u32], vec![3, 8]], 1).unwrap();
        let before = hhn_forward(&spec, &params, &t, &c).unwrap().probs();
        for x in params.theta4.get_mut("cls.b").unwrap().data_mut() {
            *x += shift;
        }
        let after = hhn_forward(&spec, &params, &t, &c).unwrap().probs();
        for r in 0..2 {
            prop_assert_eq!(before.at2(r, 1) > before.at2(r, 0), after.at2(r, 1) > after.at2(r, 0));
            prop_assert!((before.at2(r, 1) - after.at2(r, 1)).abs() < 1e-9);
        }
    }
}
