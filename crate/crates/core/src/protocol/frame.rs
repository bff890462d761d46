use std::io::{ErrorKind, Read, Write};

use crate::error::ProtocolError;

pub const MAGIC: [u8; 4] = *b"CFL1";
pub const HEADER_LEN: usize = 13;
/// Default cap on a single payload (256 MiB).
pub const DEFAULT_MAX_PAYLOAD: u64 = 256 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    Hello = 0,
    AlignReq = 1,
    AlignResp = 2,
    ScheduleAck = 3,
    Act = 4,
    Grad = 5,
    EvalReq = 6,
    EvalResp = 7,
    Term = 8,
    Error = 9,
}

impl MsgType {
    pub const ALL: [MsgType; 10] = [
        MsgType::Hello,
        MsgType::AlignReq,
        MsgType::AlignResp,
        MsgType::ScheduleAck,
        MsgType::Act,
        MsgType::Grad,
        MsgType::EvalReq,
        MsgType::EvalResp,
        MsgType::Term,
        MsgType::Error,
    ];

    pub fn from_u8(b: u8) -> Result<Self, ProtocolError> {
        Self::ALL
            .get(b as usize)
            .copied()
            .ok_or(ProtocolError::UnknownType(b))
    }

    pub fn name(self) -> &'static str {
        match self {
            MsgType::Hello => "HELLO",
            MsgType::AlignReq => "ALIGN_REQ",
            MsgType::AlignResp => "ALIGN_RESP",
            MsgType::ScheduleAck => "SCHEDULE_ACK",
            MsgType::Act => "ACT",
            MsgType::Grad => "GRAD",
            MsgType::EvalReq => "EVAL_REQ",
            MsgType::EvalResp => "EVAL_RESP",
            MsgType::Term => "TERM",
            MsgType::Error => "ERROR",
        }
    }
}

/// A raw frame: type byte and opaque payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub kind: MsgType,
    pub payload: Vec<u8>,
}

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + frame.payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(frame.kind as u8);
    out.extend_from_slice(&(frame.payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&frame.payload);
    out
}

fn parse_header(h: &[u8; HEADER_LEN], max_payload: u64) -> Result<(MsgType, usize), ProtocolError> {
    let magic = [h[0], h[1], h[2], h[3]];
    if magic != MAGIC {
        return Err(ProtocolError::BadMagic(magic));
    }
    let kind = MsgType::from_u8(h[4])?;
    let mut len = [0u8; 8];
    len.copy_from_slice(&h[5..13]);
    let len = u64::from_le_bytes(len);
    if len > max_payload || usize::try_from(len).is_err() {
        return Err(ProtocolError::TooLong(len));
    }
    Ok((kind, len as usize))
}

/// Decode one frame from the front of `bytes`, returning it and the number
/// of bytes consumed.
pub fn decode_frame(bytes: &[u8], max_payload: u64) -> Result<(Frame, usize), ProtocolError> {
    let header: &[u8; HEADER_LEN] = bytes
        .get(..HEADER_LEN)
        .and_then(|h| h.try_into().ok())
        .ok_or(ProtocolError::Truncated {
            need: HEADER_LEN,
            have: bytes.len(),
        })?;
    let (kind, len) = parse_header(header, max_payload)?;
    let end = HEADER_LEN
        .checked_add(len)
        .ok_or(ProtocolError::TooLong(len as u64))?;
    if bytes.len() < end {
        return Err(ProtocolError::Truncated {
            need: end,
            have: bytes.len(),
        });
    }
    Ok((
        Frame {
            kind,
            payload: bytes[HEADER_LEN..end].to_vec(),
        },
        end,
    ))
}

/// Fill `buf`, reporting how many bytes arrived before end of stream.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<usize, ProtocolError> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(got)
}

/// Blocking read of one frame. A clean end of stream before any header byte
/// is [`ProtocolError::Closed`].
pub fn read_frame<R: Read>(r: &mut R, max_payload: u64) -> Result<Frame, ProtocolError> {
    let mut header = [0u8; HEADER_LEN];
    match read_full(r, &mut header)? {
        0 => return Err(ProtocolError::Closed),
        n if n < HEADER_LEN => {
            return Err(ProtocolError::Truncated {
                need: HEADER_LEN,
                have: n,
            })
        }
        _ => {}
    }
    let (kind, len) = parse_header(&header, max_payload)?;
    let mut payload = vec![0u8; len];
    let got = read_full(r, &mut payload)?;
    if got < len {
        return Err(ProtocolError::Truncated {
            need: HEADER_LEN + len,
            have: HEADER_LEN + got,
        });
    }
    Ok(Frame { kind, payload })
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> Result<(), ProtocolError> {
    w.write_all(&encode_frame(frame))?;
    w.flush()?;
    Ok(())
}
