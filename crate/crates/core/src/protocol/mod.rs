mod align;
mod frame;
mod message;
mod session;
mod state;

pub use align::{align, hash_id, local_digests, salt_from_seed, AlignmentSet};
pub use frame::{
    decode_frame, encode_frame, read_frame, write_frame, Frame, MsgType, DEFAULT_MAX_PAYLOAD,
    HEADER_LEN, MAGIC,
};
pub use message::{Digest, EvalReq, Hello, Message, ScheduleAck, TensorPayload, PROTOCOL_VERSION};
pub use session::{Session, WireRecord};
pub use state::{Phase, ProtocolState};

/// Default TCP port.
pub const DEFAULT_PORT: u16 = 7361;
