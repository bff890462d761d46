//! Protocol conformance checks: codec fuzz, exhaustive small traces, and
//! faults injected over a real socket.

use std::io::Write;
use std::net::TcpStream;

use fedsplit::error::ProtocolError;
use fedsplit::model::Party;
use fedsplit::protocol::{
    decode_frame, encode_frame, read_frame, Digest, EvalReq, Hello, Message, ProtocolState,
    ScheduleAck, Session, TensorPayload, DEFAULT_MAX_PAYLOAD, PROTOCOL_VERSION,
};
use fedsplit::rng::SplitMix64;
use fedsplit::runtime::stream_pair;

pub fn special_f32(rng: &mut SplitMix64) -> f32 {
    match rng.below(8) {
        0 => f32::from_bits(rng.below(0x0080_0000) as u32), // subnormal or +0
        1 => -0.0,
        2 => f32::from_bits(0x7fc0_0000 | rng.below(0x0040_0000) as u32),
        3 => f32::INFINITY,
        4 => f32::NEG_INFINITY,
        _ => f32::from_bits(rng.next_u64() as u32),
    }
}

pub fn random_tensor(rng: &mut SplitMix64) -> TensorPayload {
    let (rows, cols) = (rng.below(5) as u32, rng.below(5) as u32);
    TensorPayload {
        epoch: rng.next_u64() as u32,
        batch_index: rng.next_u64() as u32,
        rows,
        cols,
        values: (0..rows * cols).map(|_| special_f32(rng)).collect(),
    }
}

pub fn random_digests(rng: &mut SplitMix64) -> Vec<Digest> {
    (0..rng.below(6))
        .map(|_| {
            let mut d = [0u8; 32];
            rng.fill_bytes(&mut d);
            d
        })
        .collect()
}

pub fn random_message(rng: &mut SplitMix64) -> Message {
    match rng.below(10) {
        0 => {
            let mut salt = [0u8; 16];
            rng.fill_bytes(&mut salt);
            let mut config_digest = [0u8; 32];
            rng.fill_bytes(&mut config_digest);
            Message::Hello(Hello {
                version: rng.next_u64() as u16,
                salt,
                shared_seed: rng.next_u64(),
                config_digest,
                start_epoch: rng.next_u64() as u32,
            })
        }
        1 => Message::AlignReq(random_digests(rng)),
        2 => Message::AlignResp(random_digests(rng)),
        3 => Message::ScheduleAck(ScheduleAck {
            epoch: rng.next_u64() as u32,
            batch_size: rng.next_u64() as u32,
            order: (0..rng.below(20)).map(|_| rng.next_u64() as u32).collect(),
        }),
        4 => Message::Act(random_tensor(rng)),
        5 => Message::Grad(random_tensor(rng)),
        6 => Message::EvalReq(EvalReq {
            epoch: rng.next_u64() as u32,
            batch_index: rng.next_u64() as u32,
            indices: (0..rng.below(20)).map(|_| rng.next_u64() as u32).collect(),
        }),
        7 => Message::EvalResp(random_tensor(rng)),
        8 => Message::Term,
        _ => {
            let n = rng.below(30) as usize;
            Message::Error(
                (0..n)
                    .map(|_| char::from_u32(0x20 + rng.below(0x2000) as u32).unwrap_or('?'))
                    .collect(),
            )
        }
    }
}

pub fn codec_round_trip(count: usize) {
    let mut rng = SplitMix64::new(2024);
    for i in 0..count {
        let msg = random_message(&mut rng);
        let bytes = encode_frame(&msg.to_frame());
        let (frame, used) = decode_frame(&bytes, DEFAULT_MAX_PAYLOAD).unwrap();
        assert_eq!(used, bytes.len());
        let back = Message::from_frame(&frame).unwrap();
        assert_eq!(back, msg, "message {i}");
        assert_eq!(encode_frame(&back.to_frame()), bytes, "message {i}");
    }
}

// ---- state machine ----

pub fn hello(start_epoch: u32) -> Message {
    Message::Hello(Hello {
        version: PROTOCOL_VERSION,
        salt: [0; 16],
        shared_seed: 1,
        config_digest: [0; 32],
        start_epoch,
    })
}

pub fn tensor(epoch: u32, batch: u32, rows: u32) -> TensorPayload {
    TensorPayload {
        epoch,
        batch_index: batch,
        rows,
        cols: 2,
        values: vec![0.5; rows as usize * 2],
    }
}

/// One step of a trace; `idle` marks points where the next message may be
/// any of SCHEDULE_ACK / EVAL_REQ / TERM.
pub struct Step {
    pub from: Party,
    pub msg: Message,
    pub idle: bool,
}

/// A valid conversation: `epochs` epochs of `batches` batches (size 2, last
/// one short when `ragged`), each followed by one evaluation request.
pub fn valid_trace(epochs: u32, batches: u32, ragged: bool) -> Vec<Step> {
    let n = 2 * batches - u32::from(ragged);
    let mut t = vec![
        Step {
            from: Party::A,
            msg: hello(0),
            idle: false,
        },
        Step {
            from: Party::B,
            msg: hello(0),
            idle: false,
        },
        Step {
            from: Party::A,
            msg: Message::AlignReq(vec![[1; 32]]),
            idle: false,
        },
        Step {
            from: Party::B,
            msg: Message::AlignResp(vec![[1; 32]]),
            idle: false,
        },
    ];
    for e in 0..epochs {
        t.push(Step {
            from: Party::A,
            msg: Message::ScheduleAck(ScheduleAck {
                epoch: e,
                batch_size: 2,
                order: (0..n).rev().collect(),
            }),
            idle: true,
        });
        for b in 0..batches {
            let rows = if b + 1 == batches && ragged { 1 } else { 2 };
            t.push(Step {
                from: Party::B,
                msg: Message::Act(tensor(e, b, rows)),
                idle: false,
            });
            t.push(Step {
                from: Party::A,
                msg: Message::Grad(tensor(e, b, rows)),
                idle: false,
            });
        }
        t.push(Step {
            from: Party::A,
            msg: Message::EvalReq(EvalReq {
                epoch: e,
                batch_index: 0,
                indices: vec![0, 1, 2],
            }),
            idle: true,
        });
        t.push(Step {
            from: Party::B,
            msg: Message::EvalResp(tensor(e, 0, 3)),
            idle: false,
        });
    }
    t.push(Step {
        from: Party::A,
        msg: Message::Term,
        idle: true,
    });
    t
}

/// Every message the harness throws at each state: every type, wrong and
/// right cursors, both senders.
pub fn universe(epochs: u32, batches: u32) -> Vec<Message> {
    let mut out = vec![
        hello(0),
        hello(1),
        Message::AlignReq(vec![]),
        Message::AlignResp(vec![]),
        Message::Term,
    ];
    for e in 0..=epochs {
        out.push(Message::ScheduleAck(ScheduleAck {
            epoch: e,
            batch_size: 2,
            order: vec![0, 1, 2],
        }));
        out.push(Message::EvalReq(EvalReq {
            epoch: e,
            batch_index: 0,
            indices: vec![0],
        }));
        out.push(Message::EvalReq(EvalReq {
            epoch: e,
            batch_index: 1,
            indices: vec![0],
        }));
        for b in 0..=batches {
            for rows in [1, 2, 3] {
                out.push(Message::Act(tensor(e, b, rows)));
                out.push(Message::Grad(tensor(e, b, rows)));
                out.push(Message::EvalResp(tensor(e, b, rows)));
            }
        }
    }
    out
}

pub fn exhaustive_small_traces() -> usize {
    let mut checked = 0usize;
    for epochs in 1..=3 {
        for batches in 1..=4 {
            for ragged in [false, true] {
                let trace = valid_trace(epochs, batches, ragged);
                let candidates = universe(epochs, batches);
                let mut state = ProtocolState::new();
                for (k, step) in trace.iter().enumerate() {
                    for cand in &candidates {
                        for from in [Party::A, Party::B] {
                            let mut probe = state.clone();
                            let accepted = probe.observe(from, cand).is_ok();
                            let expected = (from == step.from && *cand == step.msg)
                                || handshake_alternative(k, from, cand)
                                || (step.idle && idle_alternative(&trace[..k], from, cand));
                            assert_eq!(
                                accepted,
                                expected,
                                "epochs {epochs} batches {batches} step {k}: {:?} from {from:?}",
                                cand.kind()
                            );
                            checked += 1;
                        }
                    }
                    state.observe(step.from, &step.msg).unwrap();
                }
                assert!(state.is_closed());
                for cand in &candidates {
                    assert!(state.clone().observe(Party::A, cand).is_err());
                }
            }
        }
    }
    assert!(checked > 100_000, "{checked}");
    checked
}

/// During the handshake only kind and sender matter, except that the reply
/// HELLO must agree on the start epoch (0 in these traces).
pub fn handshake_alternative(k: usize, from: Party, cand: &Message) -> bool {
    match (k, from, cand) {
        (0, Party::A, Message::Hello(_)) => true,
        (1, Party::B, Message::Hello(h)) => h.start_epoch == 0,
        (2, Party::A, Message::AlignReq(_)) => true,
        (3, Party::B, Message::AlignResp(_)) => true,
        _ => false,
    }
}

/// Oracle for what else is legal where the trace sits idle.
pub fn idle_alternative(prefix: &[Step], from: Party, cand: &Message) -> bool {
    if from != Party::A {
        return false;
    }
    let acks = prefix
        .iter()
        .filter(|s| matches!(s.msg, Message::ScheduleAck(_)))
        .count() as u32;
    let evals_since_epoch = prefix
        .iter()
        .rev()
        .take_while(|s| !matches!(s.msg, Message::Grad(_)))
        .filter(|s| matches!(s.msg, Message::EvalReq(_)))
        .count() as u32;
    let last_trained = acks.saturating_sub(1);
    match cand {
        Message::Term => true,
        Message::ScheduleAck(s) => s.epoch == acks,
        // evaluation continues the last trained epoch (or epoch 0 before any training)
        Message::EvalReq(r) => r.epoch == last_trained && r.batch_index == evals_since_epoch,
        _ => false,
    }
}

// ---- injected faults ----

pub fn write_msg(s: &mut TcpStream, msg: &Message) {
    s.write_all(&encode_frame(&msg.to_frame())).unwrap();
}

pub fn read_msg(s: &mut TcpStream) -> Message {
    Message::from_frame(&read_frame(s, DEFAULT_MAX_PAYLOAD).unwrap()).unwrap()
}

/// Party A session in Idle after a handshake driven by a raw socket as B.
pub fn handshaken() -> (Session<TcpStream>, TcpStream) {
    let (a, mut b) = stream_pair(5).unwrap();
    let mut sa = Session::new(a, Party::A);
    sa.send(&hello(0)).unwrap();
    assert!(matches!(read_msg(&mut b), Message::Hello(_)));
    write_msg(&mut b, &hello(0));
    sa.recv().unwrap();
    sa.send(&Message::AlignReq(vec![[9; 32]])).unwrap();
    read_msg(&mut b);
    write_msg(&mut b, &Message::AlignResp(vec![[9; 32]]));
    sa.recv().unwrap();
    sa.send(&Message::ScheduleAck(ScheduleAck {
        epoch: 0,
        batch_size: 2,
        order: vec![3, 1, 0, 2],
    }))
    .unwrap();
    read_msg(&mut b);
    (sa, b)
}

pub fn expect_error_reply(b: &mut TcpStream) {
    assert!(matches!(read_msg(b), Message::Error(_)));
}

pub fn out_of_order_act_is_answered_with_error() {
    let (mut sa, mut b) = handshaken();
    write_msg(&mut b, &Message::Act(tensor(0, 1, 2)));
    assert!(matches!(sa.recv(), Err(ProtocolError::Cursor { .. })));
    expect_error_reply(&mut b);
    assert!(sa.state().is_closed());
    assert!(matches!(sa.recv(), Err(ProtocolError::Closed)));
}

pub fn duplicate_act_is_answered_with_error() {
    let (mut sa, mut b) = handshaken();
    write_msg(&mut b, &Message::Act(tensor(0, 0, 2)));
    sa.recv().unwrap();
    write_msg(&mut b, &Message::Act(tensor(0, 0, 2)));
    assert!(matches!(sa.recv(), Err(ProtocolError::State { .. })));
    expect_error_reply(&mut b);
}

pub fn truncated_frame_fails_the_session() {
    let (mut sa, mut b) = handshaken();
    let bytes = encode_frame(&Message::Act(tensor(0, 0, 2)).to_frame());
    b.write_all(&bytes[..bytes.len() - 3]).unwrap();
    b.shutdown(std::net::Shutdown::Write).unwrap();
    assert!(sa.recv().is_err());
    assert!(sa.state().is_closed());
}
