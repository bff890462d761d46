mod common;

use std::io::{Read, Write};

use fedsplit::error::ProtocolError;
use fedsplit::model::Party;
use fedsplit::protocol::{
    align, decode_frame, encode_frame, hash_id, local_digests, read_frame, Frame, Message, MsgType,
    ProtocolState, Session, TensorPayload, HEADER_LEN, MAGIC,
};
use fedsplit::rng::SplitMix64;
use fedsplit::runtime::stream_pair;

use common::conformance::{
    self, expect_error_reply, handshaken, hello, tensor, valid_trace, write_msg,
};

// ---- an independent SHA-256 (FIPS 180-4), used only as an oracle ----

const K: [u32; 64] = [
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
    0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
    0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
    0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
    0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
    0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
    0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2,
];

fn sha256_oracle(msg: &[u8]) -> [u8; 32] {
    let mut h: [u32; 8] = [
        0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a, 0x510e527f, 0x9b05688c, 0x1f83d9ab,
        0x5be0cd19,
    ];
    let mut data = msg.to_vec();
    data.push(0x80);
    while data.len() % 64 != 56 {
        data.push(0);
    }
    data.extend_from_slice(&((msg.len() as u64) * 8).to_be_bytes());
    for block in data.chunks(64) {
        let mut w = [0u32; 64];
        for i in 0..16 {
            w[i] = u32::from_be_bytes(block[4 * i..4 * i + 4].try_into().unwrap());
        }
        for i in 16..64 {
            let s0 = w[i - 15].rotate_right(7) ^ w[i - 15].rotate_right(18) ^ (w[i - 15] >> 3);
            let s1 = w[i - 2].rotate_right(17) ^ w[i - 2].rotate_right(19) ^ (w[i - 2] >> 10);
            w[i] = w[i - 16]
                .wrapping_add(s0)
                .wrapping_add(w[i - 7])
                .wrapping_add(s1);
        }
        let mut v = h;
        for i in 0..64 {
            let s1 = v[4].rotate_right(6) ^ v[4].rotate_right(11) ^ v[4].rotate_right(25);
            let ch = (v[4] & v[5]) ^ (!v[4] & v[6]);
            let t1 = v[7]
                .wrapping_add(s1)
                .wrapping_add(ch)
                .wrapping_add(K[i])
                .wrapping_add(w[i]);
            let s0 = v[0].rotate_right(2) ^ v[0].rotate_right(13) ^ v[0].rotate_right(22);
            let maj = (v[0] & v[1]) ^ (v[0] & v[2]) ^ (v[1] & v[2]);
            let t2 = s0.wrapping_add(maj);
            v = [
                t1.wrapping_add(t2),
                v[0],
                v[1],
                v[2],
                v[3].wrapping_add(t1),
                v[4],
                v[5],
                v[6],
            ];
        }
        for (a, b) in h.iter_mut().zip(v) {
            *a = a.wrapping_add(b);
        }
    }
    let mut out = [0u8; 32];
    for (i, x) in h.iter().enumerate() {
        out[4 * i..4 * i + 4].copy_from_slice(&x.to_be_bytes());
    }
    out
}

#[test]
fn sha256_empty_vector_from_both_implementations() {
    let expect = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855";
    assert_eq!(hex::encode(sha256_oracle(b"")), expect);
    use sha2::Digest as _;
    assert_eq!(hex::encode(sha2::Sha256::digest(b"")), expect);
}

#[test]
fn hash_id_matches_independent_sha256() {
    let mut rng = SplitMix64::new(44);
    for n in 0..200 {
        let mut salt = [0u8; 16];
        rng.fill_bytes(&mut salt);
        let id: String = (0..n % 70)
            .map(|_| char::from(b'a' + rng.below(26) as u8))
            .collect();
        let mut input = salt.to_vec();
        input.push(0);
        input.extend_from_slice(id.as_bytes());
        assert_eq!(hash_id(&salt, &id), sha256_oracle(&input), "id {id:?}");
    }
    let id = "clickbait-ünïcode-42";
    assert_eq!(hash_id(&[1; 16], id), hash_id(&[1; 16], id));
    assert_ne!(hash_id(&[1; 16], id), hash_id(&[2; 16], id));
}

// ---- alignment ----

fn ids(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn alignment_examples() {
    let salt = [7u8; 16];
    let a = ids(&["a", "b", "c"]);
    let b = ids(&["b", "c", "d"]);
    let da = local_digests(&a, &salt).unwrap();
    let db = local_digests(&b, &salt).unwrap();
    let on_a = align(&a, &db, &salt).unwrap();
    let on_b = align(&b, &da, &salt).unwrap();
    assert_eq!(on_a.len(), 2);
    assert_eq!(on_a.digests, on_b.digests);
    assert!(on_a.digests.windows(2).all(|w| w[0] < w[1]));
    // the same sample sits at the same aligned position on both sides
    for k in 0..2 {
        assert_eq!(a[on_a.local[k]], b[on_b.local[k]]);
    }
    let disjoint = local_digests(&ids(&["x", "y"]), &salt).unwrap();
    assert!(matches!(
        align(&a, &disjoint, &salt),
        Err(ProtocolError::EmptyIntersection)
    ));
}

// ---- codec ----

#[test]
fn fixed_layouts() {
    let term = encode_frame(&Message::Term.to_frame());
    assert_eq!(term.len(), 13);
    assert_eq!(&term[..4], b"CFL1");
    assert_eq!(term[4], 0x08);
    assert_eq!(&term[5..], &[0u8; 8]);
    let act = Message::Act(TensorPayload {
        epoch: 0,
        batch_index: 0,
        rows: 1,
        cols: 2,
        values: vec![1.0, 2.0],
    });
    assert_eq!(act.to_frame().payload.len(), 24);
}

#[test]
fn ten_thousand_messages_round_trip_bitwise() {
    conformance::codec_round_trip(10_000);
}

#[test]
fn malformed_frames_are_rejected() {
    let good = encode_frame(&Message::Term.to_frame());
    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    assert!(matches!(
        decode_frame(&bad_magic, 1 << 20),
        Err(ProtocolError::BadMagic(_))
    ));
    let mut unknown = good.clone();
    unknown[4] = 42;
    assert!(matches!(
        decode_frame(&unknown, 1 << 20),
        Err(ProtocolError::UnknownType(42))
    ));
    assert!(matches!(
        decode_frame(&good[..7], 1 << 20),
        Err(ProtocolError::Truncated { .. })
    ));
    let act = encode_frame(
        &Message::Act(TensorPayload::from_tensor(
            0,
            0,
            &fedsplit::Tensor::zeros(&[2, 2]),
        ))
        .to_frame(),
    );
    assert!(matches!(
        decode_frame(&act[..act.len() - 1], 1 << 20),
        Err(ProtocolError::Truncated { .. })
    ));
    let mut huge = MAGIC.to_vec();
    huge.push(MsgType::Act as u8);
    huge.extend_from_slice(&u64::MAX.to_le_bytes());
    assert!(matches!(
        decode_frame(&huge, 1 << 20),
        Err(ProtocolError::TooLong(_))
    ));
    // payload length disagreeing with the declared shape
    let mut frame = Message::Act(TensorPayload::from_tensor(
        0,
        0,
        &fedsplit::Tensor::zeros(&[1, 2]),
    ))
    .to_frame();
    frame.payload.truncate(20);
    assert!(Message::from_frame(&frame).is_err());
    frame.payload.extend_from_slice(&[0; 8]);
    assert!(Message::from_frame(&frame).is_err());
    assert_eq!(HEADER_LEN, 13);
}

// ---- state machine: exhaustive small traces ----

#[test]
fn exhaustive_small_traces() {
    conformance::exhaustive_small_traces();
}

#[test]
fn error_closes_from_any_state() {
    let trace = valid_trace(2, 2, true);
    for k in 0..trace.len() {
        for from in [Party::A, Party::B] {
            let mut state = ProtocolState::new();
            for s in &trace[..k] {
                state.observe(s.from, &s.msg).unwrap();
            }
            state.observe(from, &Message::Error("stop".into())).unwrap();
            assert!(state.is_closed());
        }
    }
}

#[test]
fn two_batch_epoch_trace() {
    let trace = valid_trace(1, 2, false);
    let kinds: Vec<(Party, MsgType, (u32, u32))> = trace
        .iter()
        .filter_map(|s| match &s.msg {
            Message::Act(t) => Some((s.from, MsgType::Act, t.cursor())),
            Message::Grad(t) => Some((s.from, MsgType::Grad, t.cursor())),
            _ => None,
        })
        .collect();
    assert_eq!(
        kinds,
        vec![
            (Party::B, MsgType::Act, (0, 0)),
            (Party::A, MsgType::Grad, (0, 0)),
            (Party::B, MsgType::Act, (0, 1)),
            (Party::A, MsgType::Grad, (0, 1)),
        ]
    );
}

// ---- injected faults over a real socket ----

#[test]
fn out_of_order_act_is_answered_with_error() {
    conformance::out_of_order_act_is_answered_with_error();
}

#[test]
fn duplicate_act_is_answered_with_error() {
    conformance::duplicate_act_is_answered_with_error();
}

#[test]
fn grad_before_act_is_refused_locally() {
    let (mut sa, _b) = handshaken();
    assert!(sa.send(&Message::Grad(tensor(0, 0, 2))).is_err());
}

#[test]
fn truncated_frame_fails_the_session() {
    conformance::truncated_frame_fails_the_session();
}

#[test]
fn unknown_type_is_answered_with_error() {
    let (mut sa, mut b) = handshaken();
    let mut bytes = MAGIC.to_vec();
    bytes.push(77);
    bytes.extend_from_slice(&0u64.to_le_bytes());
    b.write_all(&bytes).unwrap();
    assert!(matches!(sa.recv(), Err(ProtocolError::UnknownType(77))));
    expect_error_reply(&mut b);
}

#[test]
fn peer_error_surfaces_as_remote() {
    let (mut sa, mut b) = handshaken();
    write_msg(&mut b, &Message::Error("disk full".into()));
    match sa.recv() {
        Err(ProtocolError::Remote(m)) => assert_eq!(m, "disk full"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn silent_peer_times_out() {
    let (a, _b) = stream_pair(1).unwrap();
    let mut sa = Session::new(a, Party::A);
    sa.send(&hello(0)).unwrap();
    let start = std::time::Instant::now();
    assert!(matches!(sa.recv(), Err(ProtocolError::Io(_))));
    assert!(start.elapsed() < std::time::Duration::from_secs(10));
}

#[test]
fn frames_written_in_pieces_are_reassembled() {
    let (mut a, mut b) = stream_pair(5).unwrap();
    let bytes = encode_frame(&Frame {
        kind: MsgType::Term,
        payload: vec![],
    });
    for chunk in bytes.chunks(3) {
        b.write_all(chunk).unwrap();
        b.flush().unwrap();
    }
    let f = read_frame(&mut a, 64).unwrap();
    assert_eq!(f.kind, MsgType::Term);
    let mut rest = [0u8; 1];
    a.set_nonblocking(true).unwrap();
    assert!(a.read(&mut rest).is_err());
}
