//! Typed payloads. All integers are little-endian; tensors are row-major f32.

use crate::error::ProtocolError;
use crate::protocol::frame::{Frame, MsgType};
use crate::tensor::Tensor;

pub const PROTOCOL_VERSION: u16 = 1;
pub type Digest = [u8; 32];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hello {
    pub version: u16,
    pub salt: [u8; 16],
    pub shared_seed: u64,
    pub config_digest: Digest,
    /// First epoch this session will train (non-zero when resuming).
    pub start_epoch: u32,
}

/// One epoch's batch order, indices into the aligned sample list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScheduleAck {
    pub epoch: u32,
    pub batch_size: u32,
    pub order: Vec<u32>,
}

impl ScheduleAck {
    pub fn batch_count(&self) -> usize {
        self.order.len().div_ceil(self.batch_size.max(1) as usize)
    }

    pub fn batch_len(&self, i: usize) -> usize {
        let bs = self.batch_size as usize;
        self.order.len().saturating_sub(i * bs).min(bs)
    }

    pub fn batches(&self) -> Vec<Vec<u32>> {
        self.order
            .chunks(self.batch_size.max(1) as usize)
            .map(<[u32]>::to_vec)
            .collect()
    }
}

/// A tensor tagged with the (epoch, batch) cursor it belongs to.
#[derive(Clone, Debug)]
pub struct TensorPayload {
    pub epoch: u32,
    pub batch_index: u32,
    pub rows: u32,
    pub cols: u32,
    pub values: Vec<f32>,
}

impl PartialEq for TensorPayload {
    /// Bitwise on the values, so NaN payloads compare equal to themselves.
    fn eq(&self, other: &Self) -> bool {
        (self.epoch, self.batch_index, self.rows, self.cols)
            == (other.epoch, other.batch_index, other.rows, other.cols)
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl TensorPayload {
    pub fn from_tensor(epoch: u32, batch_index: u32, t: &Tensor<f32>) -> Self {
        let (rows, cols) = t.rows_cols();
        Self {
            epoch,
            batch_index,
            rows: rows as u32,
            cols: cols as u32,
            values: t.data().to_vec(),
        }
    }

    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::new(
            &[self.rows as usize, self.cols as usize],
            self.values.clone(),
        )
        .expect("payload length checked at decode")
    }

    pub fn cursor(&self) -> (u32, u32) {
        (self.epoch, self.batch_index)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalReq {
    pub epoch: u32,
    pub batch_index: u32,
    pub indices: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    Hello(Hello),
    AlignReq(Vec<Digest>),
    AlignResp(Vec<Digest>),
    ScheduleAck(ScheduleAck),
    Act(TensorPayload),
    Grad(TensorPayload),
    EvalReq(EvalReq),
    EvalResp(TensorPayload),
    Term,
    Error(String),
}

struct Cursor<'a> {
    kind: &'static str,
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn bad(&self, msg: impl Into<String>) -> ProtocolError {
        ProtocolError::Payload {
            kind: self.kind,
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ProtocolError> {
        if n > self.bytes.len() {
            return Err(self.bad(format!("needs {n} more bytes, has {}", self.bytes.len())));
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], ProtocolError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u16(&mut self) -> Result<u16, ProtocolError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, ProtocolError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, ProtocolError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    /// `count` u32 values that must fill the rest of the payload exactly.
    fn u32s(&mut self, count: u32) -> Result<Vec<u32>, ProtocolError> {
        if self.bytes.len() as u64 != u64::from(count) * 4 {
            return Err(self.bad(format!(
                "{count} entries do not match {} remaining bytes",
                self.bytes.len()
            )));
        }
        Ok(self
            .take(self.bytes.len())?
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn finish(&self) -> Result<(), ProtocolError> {
        match self.bytes.len() {
            0 => Ok(()),
            n => Err(self.bad(format!("{n} trailing bytes"))),
        }
    }
}

fn put_tensor(out: &mut Vec<u8>, t: &TensorPayload) {
    for v in [t.epoch, t.batch_index, t.rows, t.cols] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in &t.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn get_tensor(c: &mut Cursor) -> Result<TensorPayload, ProtocolError> {
    let (epoch, batch_index, rows, cols) = (c.u32()?, c.u32()?, c.u32()?, c.u32()?);
    let n = u64::from(rows) * u64::from(cols);
    if c.bytes.len() as u64 != n * 4 {
        return Err(c.bad(format!(
            "{rows}x{cols} tensor does not match {} value bytes",
            c.bytes.len()
        )));
    }
    let values = c
        .take(c.bytes.len())?
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(TensorPayload {
        epoch,
        batch_index,
        rows,
        cols,
        values,
    })
}

fn put_digests(out: &mut Vec<u8>, ds: &[Digest]) {
    out.extend_from_slice(&(ds.len() as u32).to_le_bytes());
    for d in ds {
        out.extend_from_slice(d);
    }
}

fn get_digests(c: &mut Cursor) -> Result<Vec<Digest>, ProtocolError> {
    let n = c.u32()?;
    if c.bytes.len() as u64 != u64::from(n) * 32 {
        return Err(c.bad(format!("{n} digests do not match {} bytes", c.bytes.len())));
    }
    (0..n).map(|_| c.array::<32>()).collect()
}

impl Message {
    pub fn kind(&self) -> MsgType {
        match self {
            Message::Hello(_) => MsgType::Hello,
            Message::AlignReq(_) => MsgType::AlignReq,
            Message::AlignResp(_) => MsgType::AlignResp,
            Message::ScheduleAck(_) => MsgType::ScheduleAck,
            Message::Act(_) => MsgType::Act,
            Message::Grad(_) => MsgType::Grad,
            Message::EvalReq(_) => MsgType::EvalReq,
            Message::EvalResp(_) => MsgType::EvalResp,
            Message::Term => MsgType::Term,
            Message::Error(_) => MsgType::Error,
        }
    }

    pub fn to_frame(&self) -> Frame {
        let mut p = Vec::new();
        match self {
            Message::Hello(h) => {
                p.extend_from_slice(&h.version.to_le_bytes());
                p.extend_from_slice(&h.salt);
                p.extend_from_slice(&h.shared_seed.to_le_bytes());
                p.extend_from_slice(&h.config_digest);
                p.extend_from_slice(&h.start_epoch.to_le_bytes());
            }
            Message::AlignReq(ds) | Message::AlignResp(ds) => put_digests(&mut p, ds),
            Message::ScheduleAck(s) => {
                p.extend_from_slice(&s.epoch.to_le_bytes());
                p.extend_from_slice(&s.batch_size.to_le_bytes());
                p.extend_from_slice(&(s.order.len() as u32).to_le_bytes());
                for i in &s.order {
                    p.extend_from_slice(&i.to_le_bytes());
                }
            }
            Message::Act(t) | Message::Grad(t) | Message::EvalResp(t) => put_tensor(&mut p, t),
            Message::EvalReq(e) => {
                p.extend_from_slice(&e.epoch.to_le_bytes());
                p.extend_from_slice(&e.batch_index.to_le_bytes());
                p.extend_from_slice(&(e.indices.len() as u32).to_le_bytes());
                for i in &e.indices {
                    p.extend_from_slice(&i.to_le_bytes());
                }
            }
            Message::Term => {}
            Message::Error(m) => p.extend_from_slice(m.as_bytes()),
        }
        Frame {
            kind: self.kind(),
            payload: p,
        }
    }

    pub fn from_frame(frame: &Frame) -> Result<Self, ProtocolError> {
        let mut c = Cursor {
            kind: frame.kind.name(),
            bytes: &frame.payload,
        };
        let msg = match frame.kind {
            MsgType::Hello => Message::Hello(Hello {
                version: c.u16()?,
                salt: c.array()?,
                shared_seed: c.u64()?,
                config_digest: c.array()?,
                start_epoch: c.u32()?,
            }),
            MsgType::AlignReq => Message::AlignReq(get_digests(&mut c)?),
            MsgType::AlignResp => Message::AlignResp(get_digests(&mut c)?),
            MsgType::ScheduleAck => {
                let (epoch, batch_size, n) = (c.u32()?, c.u32()?, c.u32()?);
                Message::ScheduleAck(ScheduleAck {
                    epoch,
                    batch_size,
                    order: c.u32s(n)?,
                })
            }
            MsgType::Act => Message::Act(get_tensor(&mut c)?),
            MsgType::Grad => Message::Grad(get_tensor(&mut c)?),
            MsgType::EvalResp => Message::EvalResp(get_tensor(&mut c)?),
            MsgType::EvalReq => {
                let (epoch, batch_index, n) = (c.u32()?, c.u32()?, c.u32()?);
                Message::EvalReq(EvalReq {
                    epoch,
                    batch_index,
                    indices: c.u32s(n)?,
                })
            }
            MsgType::Term => Message::Term,
            MsgType::Error => {
                let text = std::str::from_utf8(c.take(c.bytes.len())?)
                    .map_err(|_| c.bad("message is not UTF-8"))?;
                Message::Error(text.to_string())
            }
        };
        c.finish()?;
        Ok(msg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn act_payload_layout() {
        let t = Tensor::new(&[1, 2], vec![1.0f32, 2.0]).unwrap();
        let f = Message::Act(TensorPayload::from_tensor(3, 1, &t)).to_frame();
        assert_eq!(f.payload.len(), 24);
        assert_eq!(&f.payload[..8], &[3, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&f.payload[16..], &[0, 0, 0x80, 0x3f, 0, 0, 0, 0x40]);
    }

    #[test]
    fn hello_is_62_bytes() {
        let h = Message::Hello(Hello {
            version: PROTOCOL_VERSION,
            salt: [7; 16],
            shared_seed: 42,
            config_digest: [9; 32],
            start_epoch: 0,
        });
        let f = h.to_frame();
        assert_eq!(f.payload.len(), 2 + 16 + 8 + 32 + 4);
        assert_eq!(Message::from_frame(&f).unwrap(), h);
    }

    #[test]
    fn inconsistent_lengths_rejected() {
        let mut f = Message::Grad(TensorPayload {
            epoch: 0,
            batch_index: 0,
            rows: 1,
            cols: 1,
            values: vec![0.5],
        })
        .to_frame();
        f.payload.push(0);
        assert!(Message::from_frame(&f).is_err());
        let mut f = Message::Term.to_frame();
        f.payload.push(1);
        assert!(Message::from_frame(&f).is_err());
        let f = Frame {
            kind: MsgType::AlignReq,
            payload: vec![2, 0, 0, 0, 1],
        };
        assert!(Message::from_frame(&f).is_err());
    }
}
