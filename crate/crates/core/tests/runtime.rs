mod common;

use std::path::Path;

use fedsplit::data::{synthetic, TitleRecord};
use fedsplit::error::ProtocolError;
use fedsplit::model::{party_b_forward, ExtractorKind, ModelSpec};
use fedsplit::nn::ParamSet;
use fedsplit::protocol::{Message, MsgType, Session};
use fedsplit::runtime::{
    adam_step, central_predict, checkpoint_path, federated_predict, init_party_b, run_loopback,
    run_party_b, stream_pair, train_centralized, AdamConfig, AdamState, Init, TrainConfig, ROLE_A,
    ROLE_B, ROLE_CENTRAL,
};
use fedsplit::{Error, Tensor};

use common::{count, decode, views};

fn small() -> TrainConfig {
    TrainConfig {
        model: ModelSpec::hhn().with_dims(8, 6, 4),
        batch_size: 8,
        max_epochs: 3,
        patience: 10,
        shared_seed: 23,
        timeout_secs: 20,
        ..Default::default()
    }
}

fn balanced(n: usize) -> (Vec<TitleRecord>, Vec<fedsplit::data::ContentRecord>) {
    // interaction samples, relabelled so both classes have n/2 members
    let (mut t, c) = synthetic::interaction_dataset(n, 20, (1, 2), 3);
    for (i, r) in t.iter_mut().enumerate() {
        r.label = (i % 2) as u8;
    }
    (t, c)
}

#[test]
fn four_training_samples_in_batches_of_two_give_two_grad_frames() {
    // two folds over 8 aligned samples leave 4 for training
    let cfg = TrainConfig {
        batch_size: 2,
        max_epochs: 1,
        folds: 2,
        ..small()
    };
    let (t, c) = balanced(8);
    let (tv, cv) = views(&cfg, &t, &c);
    let run = run_loopback(&cfg, &cfg, &tv, &cv, &Init::Fresh, &Init::Fresh).unwrap();
    run.a.unwrap();
    run.b.unwrap();
    assert_eq!(count(&run.wire, MsgType::Grad), 2);
    assert_eq!(count(&run.wire, MsgType::Act), 2);
    assert_eq!(count(&run.wire, MsgType::Term), 1);
}

#[test]
fn act_rows_follow_the_schedule() {
    let cfg = TrainConfig {
        batch_size: 7,
        ..small()
    };
    let (t, c) = synthetic::interaction_dataset(60, 20, (1, 2), 4);
    let (tv, cv) = views(&cfg, &t, &c);
    let run = run_loopback(&cfg, &cfg, &tv, &cv, &Init::Fresh, &Init::Fresh).unwrap();
    let mut sizes = Vec::new();
    let mut acts = 0;
    for (_, m) in decode(&run.wire) {
        match m {
            Message::ScheduleAck(s) => {
                sizes = (0..s.batch_count()).map(|i| s.batch_len(i)).collect()
            }
            Message::Act(p) => {
                assert_eq!(p.rows as usize, sizes[p.batch_index as usize]);
                assert_eq!(p.cols as usize, cfg.model.feature_width());
                acts += 1;
            }
            Message::Grad(p) => assert_eq!(p.rows as usize, sizes[p.batch_index as usize]),
            _ => {}
        }
    }
    assert_eq!(acts, 3 * sizes.len());
}

#[test]
fn zero_learning_rate_leaves_parameters_bitwise() {
    let mut cfg = small();
    cfg.optimizer.lr = 0.0;
    let (t, c) = synthetic::interaction_dataset(48, 20, (1, 2), 5);
    let (tv, cv) = views(&cfg, &t, &c);
    let run = run_loopback(&cfg, &cfg, &tv, &cv, &Init::Fresh, &Init::Fresh).unwrap();
    let (a, b) = (run.a.unwrap(), run.b.unwrap());
    let fresh = fedsplit::runtime::init_central::<f32>(&cfg, &tv, &cv).unwrap();
    assert!(a.params.theta1.bit_eq(&fresh.theta1));
    assert!(a.params.theta3.bit_eq(&fresh.theta3));
    assert!(a.params.theta4.bit_eq(&fresh.theta4));
    assert!(b.params.theta2.bit_eq(&fresh.theta2));
    assert_eq!(a.adam.step, 3 * 5);
}

#[test]
fn zero_injected_gradient_leaves_theta2() {
    let cfg = small();
    let (t, c) = synthetic::interaction_dataset(8, 20, (1, 2), 6);
    let (_, cv) = views(&cfg, &t, &c);
    let mut p = init_party_b(&cfg, &cv, cfg.shared_seed).unwrap();
    let before = p.theta2.clone();
    let batch = fedsplit::nn::TokenBatch::new(&cv.tokens[..4], 1).unwrap();
    let mut f = party_b_forward(&cfg.model, &p.theta2, &batch).unwrap();
    let zero = Tensor::zeros(f.activations().shape());
    let grads = f.backward_injected(&zero).unwrap();
    let mut adam = AdamState::new(&[&p.theta2]);
    adam_step(&cfg.optimizer, &mut adam, &mut [&mut p.theta2], &[grads]).unwrap();
    assert!(p.theta2.bit_eq(&before));
}

#[test]
fn adam_matches_a_hand_stepped_two_parameter_model() {
    let cfg = AdamConfig::default();
    let mut set = ParamSet::<f64>::new();
    set.insert("w", Tensor::vector(vec![0.5, -0.25]), true);
    let mut state = AdamState::new(&[&set]);
    let steps = [[0.2, -1.0], [-0.4, 0.3]];
    let (mut w, mut m, mut v) = ([0.5, -0.25], [0.0; 2], [0.0; 2]);
    for (t, g) in steps.iter().enumerate() {
        let t = t as i32 + 1;
        for k in 0..2 {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            let mh = m[k] / (1.0 - cfg.beta1.powi(t));
            let vh = v[k] / (1.0 - cfg.beta2.powi(t));
            w[k] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
        }
        adam_step(
            &cfg,
            &mut state,
            &mut [&mut set],
            &[vec![Some(Tensor::vector(g.to_vec()))]],
        )
        .unwrap();
        let got = set.get("w").unwrap().data();
        for k in 0..2 {
            assert!((got[k] - w[k]).abs() < 1e-15, "step {t}: {got:?} vs {w:?}");
        }
    }
    // first step moves each coordinate by about lr against the gradient sign
    let mut one = ParamSet::<f64>::new();
    one.insert("w", Tensor::vector(vec![0.0]), true);
    let mut s = AdamState::new(&[&one]);
    adam_step(
        &cfg,
        &mut s,
        &mut [&mut one],
        &[vec![Some(Tensor::vector(vec![1.0]))]],
    )
    .unwrap();
    assert!((one.get("w").unwrap().data()[0] + 1e-3).abs() < 1e-9);
}

#[test]
fn central_runs_are_deterministic() {
    let cfg = small();
    let (t, c) = synthetic::interaction_dataset(40, 20, (1, 2), 8);
    let (tv, cv) = views(&cfg, &t, &c);
    let x = train_centralized::<f32>(&cfg, &tv, &cv, &Init::Fresh).unwrap();
    let y = train_centralized::<f32>(&cfg, &tv, &cv, &Init::Fresh).unwrap();
    assert!(x.params.bit_eq(&y.params));
    assert!(x.adam.bit_eq(&y.adam));
}

#[test]
fn hhn_fits_the_interaction_training_set() {
    let cfg = TrainConfig {
        model: ModelSpec::hhn().with_dims(16, 16, 64),
        batch_size: 32,
        max_epochs: 30,
        patience: 30,
        shared_seed: 1,
        ..Default::default()
    };
    let (t, c) = synthetic::interaction_dataset(2000, 20, (1, 2), 7);
    let (tv, cv) = views(&cfg, &t, &c);
    let out = train_centralized::<f32>(&cfg, &tv, &cv, &Init::Fresh).unwrap();
    let best = out
        .log
        .iter()
        .filter(|l| l.split == "train")
        .filter_map(|l| l.accuracy)
        .fold(0.0, f64::max);
    assert!(best >= 0.95, "best train accuracy {best}");
    assert!(out.log.iter().all(|l| l.loss.is_some_and(f64::is_finite)));
}

fn copy_epoch(from: &Path, to: &Path, role: &str, epoch: u32) {
    std::fs::copy(
        checkpoint_path(from, role, Some(epoch)),
        checkpoint_path(to, role, None),
    )
    .unwrap();
}

#[test]
fn resuming_from_an_epoch_checkpoint_reproduces_the_run() {
    let full_dir = tempfile::tempdir().unwrap();
    let mut cfg = TrainConfig {
        max_epochs: 4,
        ..small()
    };
    cfg.paths.out_dir = Some(full_dir.path().to_path_buf());
    let (t, c) = synthetic::interaction_dataset(48, 20, (1, 2), 9);
    let (tv, cv) = views(&cfg, &t, &c);
    let full = run_loopback(&cfg, &cfg, &tv, &cv, &Init::Fresh, &Init::Fresh).unwrap();
    let (fa, fb) = (full.a.unwrap(), full.b.unwrap());
    assert_eq!(fa.checkpoints.len(), 4);

    let resume_dir = tempfile::tempdir().unwrap();
    copy_epoch(full_dir.path(), resume_dir.path(), ROLE_A, 1);
    copy_epoch(full_dir.path(), resume_dir.path(), ROLE_B, 1);
    cfg.paths.out_dir = Some(resume_dir.path().to_path_buf());
    let resumed = run_loopback(&cfg, &cfg, &tv, &cv, &Init::Resume, &Init::Resume).unwrap();
    let (ra, rb) = (resumed.a.unwrap(), resumed.b.unwrap());
    assert_eq!(ra.epochs_run, 2);
    assert!(ra.params.theta1.bit_eq(&fa.params.theta1));
    assert!(ra.params.theta3.bit_eq(&fa.params.theta3));
    assert!(ra.params.theta4.bit_eq(&fa.params.theta4));
    assert!(rb.params.theta2.bit_eq(&fb.params.theta2));
    assert!(ra.adam.bit_eq(&fa.adam));

    // the centralized trainer resumes the same way
    let central_dir = tempfile::tempdir().unwrap();
    cfg.paths.out_dir = Some(central_dir.path().to_path_buf());
    let whole = train_centralized::<f32>(&cfg, &tv, &cv, &Init::Fresh).unwrap();
    let again_dir = tempfile::tempdir().unwrap();
    copy_epoch(central_dir.path(), again_dir.path(), ROLE_CENTRAL, 2);
    cfg.paths.out_dir = Some(again_dir.path().to_path_buf());
    let rest = train_centralized::<f32>(&cfg, &tv, &cv, &Init::Resume).unwrap();
    assert_eq!(rest.epochs_run, 1);
    assert!(rest.params.bit_eq(&whole.params));
}

#[test]
fn mismatched_configs_abort_the_handshake() {
    let cfg = small();
    let other = TrainConfig {
        batch_size: 9,
        ..small()
    };
    let (t, c) = synthetic::interaction_dataset(40, 20, (1, 2), 10);
    let (tv, cv) = views(&cfg, &t, &c);
    let run = run_loopback(&cfg, &other, &tv, &cv, &Init::Fresh, &Init::Fresh).unwrap();
    assert!(matches!(
        run.b,
        Err(Error::Protocol(ProtocolError::ConfigMismatch))
    ));
    assert!(run.a.is_err());
    assert_eq!(count(&run.wire, MsgType::Act), 0);

    // local fields may differ
    let relaxed = TrainConfig {
        timeout_secs: 5,
        ..small()
    };
    let run = run_loopback(&cfg, &relaxed, &tv, &cv, &Init::Fresh, &Init::Fresh).unwrap();
    assert!(run.a.is_ok() && run.b.is_ok());
}

#[test]
fn federated_predictions_equal_central_predictions() {
    for kind in [ExtractorKind::San, ExtractorKind::Cnn] {
        let fed_dir = tempfile::tempdir().unwrap();
        let central_dir = tempfile::tempdir().unwrap();
        let mut cfg = small();
        cfg.model = if kind == ExtractorKind::San {
            cfg.model
        } else {
            ModelSpec::paired(kind).with_dims(8, 6, 4)
        };
        cfg.model.cnn_heights = vec![1, 2];
        let (t, c) = synthetic::demo_corpus(60, 11);
        let (tv, cv) = views(&cfg, &t, &c);

        cfg.paths.out_dir = Some(fed_dir.path().to_path_buf());
        let run = run_loopback(&cfg, &cfg, &tv, &cv, &Init::Fresh, &Init::Fresh).unwrap();
        run.a.unwrap();
        run.b.unwrap();
        cfg.paths.out_dir = Some(central_dir.path().to_path_buf());
        train_centralized::<f32>(&cfg, &tv, &cv, &Init::Fresh).unwrap();
        let central = central_predict(
            &cfg,
            &tv,
            &cv,
            &checkpoint_path(central_dir.path(), ROLE_CENTRAL, None),
        )
        .unwrap();

        cfg.paths.out_dir = Some(fed_dir.path().to_path_buf());
        let (sa, sb) = stream_pair(cfg.timeout_secs).unwrap();
        let (fed, served) = std::thread::scope(|s| {
            let (cfg, cv) = (&cfg, &cv);
            let ck = Init::Checkpoint(checkpoint_path(fed_dir.path(), ROLE_B, None));
            let b = s.spawn(move || {
                let mut session = Session::new(sb, fedsplit::model::Party::B);
                run_party_b(cfg, cv, &mut session, &ck)
            });
            let mut session = Session::new(sa, fedsplit::model::Party::A);
            let fed = federated_predict(
                cfg,
                &tv,
                &mut session,
                &checkpoint_path(fed_dir.path(), ROLE_A, None),
            );
            (fed.unwrap(), b.join().unwrap())
        });
        let served = served.unwrap();
        assert_eq!(served.epochs_run, 0);
        assert!(served.eval_requests > 0);
        assert_eq!(fed.ids, central.ids);
        assert_eq!(fed.scores.len(), central.scores.len());
        for (x, y) in fed.scores.iter().zip(&central.scores) {
            assert_eq!(x.to_bits(), y.to_bits(), "{kind:?}");
            assert!((0.0..=1.0).contains(x));
        }
        assert_eq!(fed.result.unwrap().roc_auc, central.result.unwrap().roc_auc);
    }
}
