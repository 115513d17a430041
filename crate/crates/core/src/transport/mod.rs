//! Connection layer: packetization, per-path congestion control and loss
//! detection, and receiver-side reassembly.

pub mod packet;
pub mod path_state;
pub mod recv;

pub use packet::{
    packet_count, packetize, wire_bytes, AckFrame, MessageId, MessageTag, Packet, StreamFrame,
    StreamId, ACK_PACKET_SIZE, HEADER_OVERHEAD, MAX_PACKET_SIZE, MAX_PAYLOAD,
};
pub use path_state::{AckOutcome, CcParams, CwndHistory, PathState, PathStats, Phase, SentPacket};
pub use recv::{Delivery, RangeSet, ReceiveState};
