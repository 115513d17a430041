use serde::Serialize;

use crate::engine::Micros;

/// Maximum size of any packet on the wire.
pub const MAX_PACKET_SIZE: u32 = 1350;
/// Fixed per-packet header overhead.
pub const HEADER_OVERHEAD: u32 = 50;
/// Largest stream payload that fits in one packet.
pub const MAX_PAYLOAD: u32 = MAX_PACKET_SIZE - HEADER_OVERHEAD;
/// Size of an ack-only packet.
pub const ACK_PACKET_SIZE: u32 = HEADER_OVERHEAD;

pub type StreamId = u64;
pub type MessageId = u64;

/// Application message a frame belongs to, with the message's total length so the
/// receiver can detect completion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct MessageTag {
    pub id: MessageId,
    pub len: u64,
}

/// A single stream frame. For message streams `offset` is relative to the start of
/// the message; for the background stream it is the absolute stream offset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StreamFrame {
    pub stream_id: StreamId,
    pub message: Option<MessageTag>,
    pub offset: u64,
    pub len: u32,
    pub fin: bool,
}

impl StreamFrame {
    pub fn end(&self) -> u64 {
        self.offset + self.len as u64
    }

    /// Size of a packet carrying only this frame.
    pub fn packet_size(&self) -> u32 {
        self.len + HEADER_OVERHEAD
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct AckFrame {
    pub packet_number: u64,
}

/// A transport packet: at most one stream frame, optionally an ack frame.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Packet {
    pub packet_number: u64,
    pub path_id: usize,
    pub frame: Option<StreamFrame>,
    pub ack: Option<AckFrame>,
    pub size: u32,
    pub sent_time: Micros,
    pub priority: bool,
    pub retransmission: bool,
    /// Set on every copy of a frame that was sent redundantly on several paths.
    pub duplicated: bool,
}

impl Packet {
    pub fn ack_only(packet_number: u64, path_id: usize, acked: u64, sent_time: Micros) -> Self {
        Self {
            packet_number,
            path_id,
            frame: None,
            ack: Some(AckFrame {
                packet_number: acked,
            }),
            size: ACK_PACKET_SIZE,
            sent_time,
            priority: false,
            retransmission: false,
            duplicated: false,
        }
    }
}

/// Split `data_length` bytes of a stream into frames of at most [`MAX_PAYLOAD`] bytes.
///
/// Offsets are contiguous from `start`; the last frame carries `fin`.
pub fn packetize(
    stream_id: StreamId,
    message: Option<MessageTag>,
    start: u64,
    data_length: u64,
) -> Vec<StreamFrame> {
    assert!(data_length > 0, "packetize called with no data");
    let count = data_length.div_ceil(MAX_PAYLOAD as u64);
    (0..count)
        .map(|i| {
            let offset = start + i * MAX_PAYLOAD as u64;
            let len = (data_length - i * MAX_PAYLOAD as u64).min(MAX_PAYLOAD as u64) as u32;
            StreamFrame {
                stream_id,
                message,
                offset,
                len,
                fin: i + 1 == count,
            }
        })
        .collect()
}

/// Number of packets needed for a message of `len` bytes.
pub fn packet_count(len: u64) -> u64 {
    len.div_ceil(MAX_PAYLOAD as u64)
}

/// Total wire bytes of a message of `len` bytes, headers included.
pub fn wire_bytes(len: u64) -> u64 {
    len + packet_count(len) * HEADER_OVERHEAD as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_kilobyte_message() {
        let frames = packetize(1, None, 0, 10_000);
        assert_eq!(frames.len(), 8);
        assert!(frames[..7].iter().all(|f| f.len == 1300));
        assert_eq!(frames[7].len, 900);
        assert!(frames[7].fin && !frames[6].fin);
        let total: u32 = frames.iter().map(StreamFrame::packet_size).sum();
        assert_eq!(total, 10_400);
    }

    #[test]
    fn offsets_are_contiguous() {
        let frames = packetize(3, None, 500, 7_000);
        let mut expect = 500;
        for f in &frames {
            assert_eq!(f.offset, expect);
            expect = f.end();
        }
        assert_eq!(expect, 7_500);
    }

    #[test]
    fn single_byte_and_five_kilobytes() {
        assert_eq!(packetize(1, None, 0, 1).len(), 1);
        assert_eq!(packetize(1, None, 0, 5_000).len(), 4);
        assert_eq!(packet_count(5_000), 4);
        assert_eq!(wire_bytes(1), 51);
    }

    #[test]
    fn packets_never_exceed_max_size() {
        for len in [1u64, 1299, 1300, 1301, 2600, 49_999, 50_000] {
            for f in packetize(0, None, 0, len) {
                assert!(f.packet_size() <= MAX_PACKET_SIZE);
            }
        }
    }
}
