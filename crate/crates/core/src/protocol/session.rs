use std::io::{Read, Write};

use crate::error::ProtocolError;
use crate::model::Party;
use crate::protocol::frame::{encode_frame, read_frame, DEFAULT_MAX_PAYLOAD};
use crate::protocol::message::Message;
use crate::protocol::state::ProtocolState;

/// A frame as it crossed the wire, for instrumentation.
#[derive(Clone, Debug)]
pub struct WireRecord {
    pub from: Party,
    pub bytes: Vec<u8>,
}

/// One endpoint of a connection. Every frame sent or received is checked
/// against the shared conversation rules; a violation by the peer is
/// answered with an ERROR frame.
pub struct Session<S> {
    stream: S,
    role: Party,
    state: ProtocolState,
    max_payload: u64,
    transcript: Option<Vec<WireRecord>>,
}

impl<S: Read + Write> Session<S> {
    pub fn new(stream: S, role: Party) -> Self {
        Self {
            stream,
            role,
            state: ProtocolState::new(),
            max_payload: DEFAULT_MAX_PAYLOAD,
            transcript: None,
        }
    }

    /// Keep a copy of every frame sent and received.
    pub fn recording(mut self) -> Self {
        self.transcript = Some(Vec::new());
        self
    }

    pub fn with_max_payload(mut self, max: u64) -> Self {
        self.max_payload = max;
        self
    }

    pub fn role(&self) -> Party {
        self.role
    }

    pub fn state(&self) -> &ProtocolState {
        &self.state
    }

    pub fn transcript(&self) -> &[WireRecord] {
        self.transcript.as_deref().unwrap_or(&[])
    }

    pub fn take_transcript(&mut self) -> Vec<WireRecord> {
        self.transcript
            .as_mut()
            .map(std::mem::take)
            .unwrap_or_default()
    }

    pub fn get_ref(&self) -> &S {
        &self.stream
    }

    fn peer(&self) -> Party {
        match self.role {
            Party::A => Party::B,
            Party::B => Party::A,
        }
    }

    fn write(&mut self, msg: &Message) -> Result<(), ProtocolError> {
        let bytes = encode_frame(&msg.to_frame());
        self.stream.write_all(&bytes)?;
        self.stream.flush()?;
        if let Some(t) = &mut self.transcript {
            t.push(WireRecord {
                from: self.role,
                bytes,
            });
        }
        Ok(())
    }

    pub fn send(&mut self, msg: &Message) -> Result<(), ProtocolError> {
        self.state.observe(self.role, msg)?;
        self.write(msg)
    }

    /// Tell the peer why the session is ending (best effort) and close.
    pub fn abort(&mut self, reason: &str) {
        if !self.state.is_closed() {
            log::error!("aborting session: {reason}");
            let _ = self.write(&Message::Error(reason.to_string()));
            self.state.close();
        }
    }

    fn fail(&mut self, err: ProtocolError) -> ProtocolError {
        if !matches!(err, ProtocolError::Closed | ProtocolError::Io(_)) {
            self.abort(&err.to_string());
        }
        self.state.close();
        err
    }

    pub fn recv(&mut self) -> Result<Message, ProtocolError> {
        if self.state.is_closed() {
            return Err(ProtocolError::Closed);
        }
        let frame = read_frame(&mut self.stream, self.max_payload).map_err(|e| self.fail(e))?;
        let peer = self.peer();
        if let Some(t) = &mut self.transcript {
            t.push(WireRecord {
                from: peer,
                bytes: encode_frame(&frame),
            });
        }
        let msg = Message::from_frame(&frame).map_err(|e| self.fail(e))?;
        if let Message::Error(reason) = msg {
            self.state.close();
            return Err(ProtocolError::Remote(reason));
        }
        self.state.observe(peer, &msg).map_err(|e| self.fail(e))?;
        Ok(msg)
    }
}
