//! The conversation rules, checked identically by both endpoints on every
//! frame they send or receive:
//!
//! ```text
//! A: HELLO  B: HELLO  A: ALIGN_REQ  B: ALIGN_RESP
//! then, repeatedly from IDLE:
//!   A: SCHEDULE_ACK(e)  { B: ACT(e,i)  A: GRAD(e,i) } for each batch i
//!   A: EVAL_REQ(e,j)  B: EVAL_RESP(e,j)
//! and finally A: TERM
//! ```
//! ERROR may be sent by either side at any time and closes the session.

use crate::error::ProtocolError;
use crate::model::Party;
use crate::protocol::frame::MsgType;
use crate::protocol::message::{Message, PROTOCOL_VERSION};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Phase {
    Start,
    AwaitHelloB,
    AwaitAlignReq,
    AwaitAlignResp,
    Idle,
    AwaitAct {
        epoch: u32,
        batch: u32,
    },
    AwaitGrad {
        epoch: u32,
        batch: u32,
        rows: u32,
        cols: u32,
    },
    AwaitEvalResp {
        epoch: u32,
        batch: u32,
        rows: u32,
    },
    Closed,
}

#[derive(Clone, Debug)]
pub struct ProtocolState {
    phase: Phase,
    next_epoch: u32,
    eval_epoch: u32,
    eval_next: u32,
    batch_lens: Vec<u32>,
}

impl Default for ProtocolState {
    fn default() -> Self {
        Self::new()
    }
}

fn sender(kind: MsgType, phase: &Phase) -> Option<Party> {
    match kind {
        MsgType::Hello if *phase == Phase::Start => Some(Party::A),
        MsgType::Hello => Some(Party::B),
        MsgType::AlignReq
        | MsgType::ScheduleAck
        | MsgType::Grad
        | MsgType::EvalReq
        | MsgType::Term => Some(Party::A),
        MsgType::AlignResp | MsgType::Act | MsgType::EvalResp => Some(Party::B),
        MsgType::Error => None,
    }
}

impl ProtocolState {
    pub fn new() -> Self {
        Self {
            phase: Phase::Start,
            next_epoch: 0,
            eval_epoch: 0,
            eval_next: 0,
            batch_lens: Vec::new(),
        }
    }

    pub fn phase(&self) -> &Phase {
        &self.phase
    }

    pub fn is_closed(&self) -> bool {
        self.phase == Phase::Closed
    }

    pub fn close(&mut self) {
        self.phase = Phase::Closed;
    }

    /// Cursor the next EVAL_REQ must carry.
    pub fn eval_cursor(&self) -> (u32, u32) {
        (self.eval_epoch, self.eval_next)
    }

    /// Epoch the next SCHEDULE_ACK must carry.
    pub fn next_epoch(&self) -> u32 {
        self.next_epoch
    }

    fn reject(&self, from: Party, msg: &Message) -> ProtocolError {
        ProtocolError::State {
            msg: format!(
                "{} from party {from:?} not allowed in phase {:?}",
                msg.kind().name(),
                self.phase
            ),
        }
    }

    /// Validate `msg` sent by `from` and advance. On error the state is unchanged.
    pub fn observe(&mut self, from: Party, msg: &Message) -> Result<(), ProtocolError> {
        if self.phase == Phase::Closed {
            return Err(ProtocolError::State {
                msg: format!("{} after the session closed", msg.kind().name()),
            });
        }
        if let Message::Error(_) = msg {
            self.phase = Phase::Closed;
            return Ok(());
        }
        if sender(msg.kind(), &self.phase) != Some(from) {
            return Err(self.reject(from, msg));
        }
        let cursor = |e: u32, b: u32, got: (u32, u32)| ProtocolError::Cursor {
            expected_epoch: e,
            expected_batch: b,
            epoch: got.0,
            batch: got.1,
        };
        let next = match (&self.phase, msg) {
            (Phase::Start, Message::Hello(h)) => {
                if h.version != PROTOCOL_VERSION {
                    return Err(ProtocolError::State {
                        msg: format!("unsupported protocol version {}", h.version),
                    });
                }
                self.next_epoch = h.start_epoch;
                self.eval_epoch = h.start_epoch;
                Phase::AwaitHelloB
            }
            (Phase::AwaitHelloB, Message::Hello(h)) => {
                if h.version != PROTOCOL_VERSION || h.start_epoch != self.next_epoch {
                    return Err(ProtocolError::State {
                        msg: "HELLO reply disagrees on version or start epoch".into(),
                    });
                }
                Phase::AwaitAlignReq
            }
            (Phase::AwaitAlignReq, Message::AlignReq(_)) => Phase::AwaitAlignResp,
            (Phase::AwaitAlignResp, Message::AlignResp(_)) => {
                self.eval_next = 0;
                Phase::Idle
            }
            (Phase::Idle, Message::ScheduleAck(s)) => {
                if s.epoch != self.next_epoch {
                    return Err(cursor(self.next_epoch, 0, (s.epoch, 0)));
                }
                if s.batch_size == 0 || s.order.is_empty() {
                    return Err(ProtocolError::State {
                        msg: "empty schedule".into(),
                    });
                }
                self.batch_lens = (0..s.batch_count())
                    .map(|i| s.batch_len(i) as u32)
                    .collect();
                Phase::AwaitAct {
                    epoch: s.epoch,
                    batch: 0,
                }
            }
            (Phase::Idle, Message::EvalReq(r)) => {
                if (r.epoch, r.batch_index) != (self.eval_epoch, self.eval_next) {
                    return Err(cursor(
                        self.eval_epoch,
                        self.eval_next,
                        (r.epoch, r.batch_index),
                    ));
                }
                if r.indices.is_empty() {
                    return Err(ProtocolError::State {
                        msg: "empty evaluation batch".into(),
                    });
                }
                Phase::AwaitEvalResp {
                    epoch: r.epoch,
                    batch: r.batch_index,
                    rows: r.indices.len() as u32,
                }
            }
            (Phase::Idle, Message::Term) => Phase::Closed,
            (&Phase::AwaitAct { epoch, batch }, Message::Act(t)) => {
                if t.cursor() != (epoch, batch) {
                    return Err(cursor(epoch, batch, t.cursor()));
                }
                let want = self.batch_lens[batch as usize];
                if t.rows != want || t.cols == 0 {
                    return Err(ProtocolError::State {
                        msg: format!(
                            "ACT has {}x{} values, batch has {want} rows",
                            t.rows, t.cols
                        ),
                    });
                }
                Phase::AwaitGrad {
                    epoch,
                    batch,
                    rows: t.rows,
                    cols: t.cols,
                }
            }
            (
                &Phase::AwaitGrad {
                    epoch,
                    batch,
                    rows,
                    cols,
                },
                Message::Grad(t),
            ) => {
                if t.cursor() != (epoch, batch) {
                    return Err(cursor(epoch, batch, t.cursor()));
                }
                if (t.rows, t.cols) != (rows, cols) {
                    return Err(ProtocolError::State {
                        msg: format!("GRAD is {}x{}, ACT was {rows}x{cols}", t.rows, t.cols),
                    });
                }
                if (batch as usize) + 1 < self.batch_lens.len() {
                    Phase::AwaitAct {
                        epoch,
                        batch: batch + 1,
                    }
                } else {
                    self.next_epoch = epoch + 1;
                    self.eval_epoch = epoch;
                    self.eval_next = 0;
                    Phase::Idle
                }
            }
            (&Phase::AwaitEvalResp { epoch, batch, rows }, Message::EvalResp(t)) => {
                if t.cursor() != (epoch, batch) {
                    return Err(cursor(epoch, batch, t.cursor()));
                }
                if t.rows != rows || t.cols == 0 {
                    return Err(ProtocolError::State {
                        msg: format!("EVAL_RESP has {} rows, request had {rows}", t.rows),
                    });
                }
                self.eval_next += 1;
                Phase::Idle
            }
            _ => return Err(self.reject(from, msg)),
        };
        self.phase = next;
        Ok(())
    }
}
