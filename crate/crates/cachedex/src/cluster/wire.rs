//! Frame codec for the cluster wire protocol.
//!
//! Every message is one frame: a fixed 14-byte header followed by a typed
//! payload.
//!
//! ```text
//! offset  size  field
//! 0       2     magic 0x43 0x53 ("CS")
//! 2       1     type: 0 QUERY_BATCH, 1 RESULT_BATCH, 2 SHUTDOWN, 3 READY
//! 3       1     reserved, must be 0
//! 4       2     node_id, u16 LE (sender)
//! 6       4     batch_id, u32 LE
//! 10      4     count, u32 LE
//! 14      ...   payload: count × u32 LE keys   (QUERY_BATCH)
//!                        count × u64 LE ranks  (RESULT_BATCH)
//!                        empty, count must be 0 (SHUTDOWN, READY)
//! ```
//!
//! Frames travel back-to-back on a stream with no extra framing; the header
//! alone determines the frame length. All decoding is total: malformed
//! bytes produce a [`WireError`] naming the offending field, never a panic.

use thiserror::Error;

/// First magic byte, `b'C'`.
pub const MAGIC0: u8 = 0x43;
/// Second magic byte, `b'S'`.
pub const MAGIC1: u8 = 0x53;
/// Fixed header length in bytes.
pub const HEADER_LEN: usize = 14;
/// Ceiling on the key/rank count of a single frame (2²⁶ entries, 512 MiB of
/// ranks): rejects absurd lengths before any allocation is attempted.
pub const MAX_COUNT: u32 = 1 << 26;

/// Decoded protocol message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    /// Keys for the receiver to look up.
    QueryBatch { node_id: u16, batch_id: u32, keys: Vec<u32> },
    /// Ranks answering the batch of the same `batch_id`, in key order.
    ResultBatch { node_id: u16, batch_id: u32, ranks: Vec<u64> },
    /// End of stream; the receiver's request loop terminates.
    Shutdown { node_id: u16 },
    /// Announces a node is connected and serving.
    Ready { node_id: u16 },
}

impl Message {
    /// Frame type byte for this message.
    pub fn type_byte(&self) -> u8 {
        match self {
            Message::QueryBatch { .. } => 0,
            Message::ResultBatch { .. } => 1,
            Message::Shutdown { .. } => 2,
            Message::Ready { .. } => 3,
        }
    }

    /// Sender node id carried in the header.
    pub fn node_id(&self) -> u16 {
        match self {
            Message::QueryBatch { node_id, .. }
            | Message::ResultBatch { node_id, .. }
            | Message::Shutdown { node_id }
            | Message::Ready { node_id } => *node_id,
        }
    }
}

/// Frame decoding failures, each naming the field that broke.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("bad magic: expected 0x4353, got {found:#06x}")]
    BadMagic { found: u16 },
    #[error("unknown frame type {0}")]
    BadType(u8),
    #[error("reserved header byte must be 0, got {0}")]
    BadReserved(u8),
    #[error("frame count {count} exceeds the {max} limit")]
    CountTooLarge { count: u32, max: u32 },
    #[error("frame type {frame_type} must carry no payload, got count {count}")]
    UnexpectedPayload { frame_type: u8, count: u32 },
    #[error("frame truncated: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("batch of {keys} keys exceeds the frame count limit {max}")]
    BatchTooLarge { keys: usize, max: u32 },
}

/// Encodes a message into one wire frame.
///
/// # Panics
/// Never; batches beyond [`MAX_COUNT`] keys are an encode-side contract
/// violation surfaced as an error.
pub fn encode_frame(message: &Message) -> Result<Vec<u8>, WireError> {
    let (batch_id, count, payload_width) = match message {
        Message::QueryBatch { batch_id, keys, .. } => (*batch_id, keys.len(), 4),
        Message::ResultBatch { batch_id, ranks, .. } => (*batch_id, ranks.len(), 8),
        Message::Shutdown { .. } | Message::Ready { .. } => (0, 0, 0),
    };
    if count > MAX_COUNT as usize {
        return Err(WireError::BatchTooLarge { keys: count, max: MAX_COUNT });
    }
    let mut frame = Vec::with_capacity(HEADER_LEN + count * payload_width);
    frame.extend_from_slice(&[MAGIC0, MAGIC1, message.type_byte(), 0]);
    frame.extend_from_slice(&message.node_id().to_le_bytes());
    frame.extend_from_slice(&batch_id.to_le_bytes());
    frame.extend_from_slice(&(count as u32).to_le_bytes());
    match message {
        Message::QueryBatch { keys, .. } => {
            for key in keys {
                frame.extend_from_slice(&key.to_le_bytes());
            }
        }
        Message::ResultBatch { ranks, .. } => {
            for rank in ranks {
                frame.extend_from_slice(&rank.to_le_bytes());
            }
        }
        Message::Shutdown { .. } | Message::Ready { .. } => {}
    }
    Ok(frame)
}

/// Validated view of a frame header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub frame_type: u8,
    pub node_id: u16,
    pub batch_id: u32,
    pub count: u32,
}

impl FrameHeader {
    /// Parses and validates the fixed header.
    pub fn parse(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.len() < HEADER_LEN {
            return Err(WireError::Truncated { needed: HEADER_LEN, have: bytes.len() });
        }
        if bytes[0] != MAGIC0 || bytes[1] != MAGIC1 {
            return Err(WireError::BadMagic { found: u16::from_be_bytes([bytes[0], bytes[1]]) });
        }
        let frame_type = bytes[2];
        if frame_type > 3 {
            return Err(WireError::BadType(frame_type));
        }
        if bytes[3] != 0 {
            return Err(WireError::BadReserved(bytes[3]));
        }
        let node_id = u16::from_le_bytes([bytes[4], bytes[5]]);
        let batch_id = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
        let count = u32::from_le_bytes(bytes[10..14].try_into().unwrap());
        if count > MAX_COUNT {
            return Err(WireError::CountTooLarge { count, max: MAX_COUNT });
        }
        if matches!(frame_type, 2 | 3) && count != 0 {
            return Err(WireError::UnexpectedPayload { frame_type, count });
        }
        Ok(Self { frame_type, node_id, batch_id, count })
    }

    /// Payload length in bytes implied by this header.
    pub fn payload_len(&self) -> usize {
        let width = match self.frame_type {
            0 => 4,
            1 => 8,
            _ => 0,
        };
        self.count as usize * width
    }
}

/// Decodes one frame from the front of `bytes`, returning the message and
/// the number of bytes consumed (so back-to-back frames can be peeled off a
/// stream buffer).
pub fn decode_frame(bytes: &[u8]) -> Result<(Message, usize), WireError> {
    let header = FrameHeader::parse(bytes)?;
    let total = HEADER_LEN + header.payload_len();
    if bytes.len() < total {
        return Err(WireError::Truncated { needed: total, have: bytes.len() });
    }
    let payload = &bytes[HEADER_LEN..total];
    let message = match header.frame_type {
        0 => Message::QueryBatch {
            node_id: header.node_id,
            batch_id: header.batch_id,
            keys: payload
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        },
        1 => Message::ResultBatch {
            node_id: header.node_id,
            batch_id: header.batch_id,
            ranks: payload
                .chunks_exact(8)
                .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        },
        2 => Message::Shutdown { node_id: header.node_id },
        _ => Message::Ready { node_id: header.node_id },
    };
    Ok((message, total))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip(message: &Message) {
        let frame = encode_frame(message).unwrap();
        let (decoded, consumed) = decode_frame(&frame).unwrap();
        assert_eq!(&decoded, message);
        assert_eq!(consumed, frame.len());
    }

    #[test]
    fn query_batch_layout_is_bit_exact() {
        let frame = encode_frame(&Message::QueryBatch { node_id: 0, batch_id: 1, keys: vec![42] })
            .unwrap();
        assert_eq!(frame.len(), 18, "14-byte header + one 4-byte key");
        assert_eq!(
            frame,
            vec![
                0x43, 0x53, // magic "CS"
                0x00, // type QUERY_BATCH
                0x00, // reserved
                0x00, 0x00, // node 0
                0x01, 0x00, 0x00, 0x00, // batch 1
                0x01, 0x00, 0x00, 0x00, // count 1
                0x2A, 0x00, 0x00, 0x00, // key 42
            ]
        );
        round_trip(&Message::QueryBatch { node_id: 0, batch_id: 1, keys: vec![42] });
    }

    #[test]
    fn header_only_frames_round_trip() {
        for message in [Message::Shutdown { node_id: 7 }, Message::Ready { node_id: 65535 }] {
            let frame = encode_frame(&message).unwrap();
            assert_eq!(frame.len(), HEADER_LEN);
            round_trip(&message);
        }
    }

    #[test]
    fn result_batch_round_trips_with_wide_ranks() {
        round_trip(&Message::ResultBatch {
            node_id: 3,
            batch_id: 0xDEAD_BEEF,
            ranks: vec![0, 1, u64::MAX, 1 << 33],
        });
    }

    #[test]
    fn rejects_bad_magic() {
        let mut frame = encode_frame(&Message::Ready { node_id: 0 }).unwrap();
        frame[0] = 0x58;
        assert!(matches!(decode_frame(&frame), Err(WireError::BadMagic { .. })));
    }

    #[test]
    fn rejects_unknown_type_and_reserved() {
        let good = encode_frame(&Message::Ready { node_id: 0 }).unwrap();
        let mut frame = good.clone();
        frame[2] = 9;
        assert_eq!(decode_frame(&frame).unwrap_err(), WireError::BadType(9));
        let mut frame = good;
        frame[3] = 1;
        assert_eq!(decode_frame(&frame).unwrap_err(), WireError::BadReserved(1));
    }

    #[test]
    fn rejects_length_mismatch() {
        let frame =
            encode_frame(&Message::QueryBatch { node_id: 0, batch_id: 5, keys: vec![1, 2, 3] })
                .unwrap();
        let short = &frame[..frame.len() - 2];
        assert_eq!(
            decode_frame(short).unwrap_err(),
            WireError::Truncated { needed: frame.len(), have: frame.len() - 2 }
        );
        assert!(matches!(
            decode_frame(&frame[..7]),
            Err(WireError::Truncated { needed: HEADER_LEN, have: 7 })
        ));
    }

    #[test]
    fn rejects_oversized_count_without_allocating() {
        let mut frame = encode_frame(&Message::QueryBatch { node_id: 0, batch_id: 0, keys: vec![] })
            .unwrap();
        frame[10..14].copy_from_slice(&u32::MAX.to_le_bytes());
        assert_eq!(
            decode_frame(&frame).unwrap_err(),
            WireError::CountTooLarge { count: u32::MAX, max: MAX_COUNT }
        );
    }

    #[test]
    fn rejects_payload_on_control_frames() {
        let mut frame = encode_frame(&Message::Shutdown { node_id: 0 }).unwrap();
        frame[10] = 1; // claim one payload entry
        assert_eq!(
            decode_frame(&frame).unwrap_err(),
            WireError::UnexpectedPayload { frame_type: 2, count: 1 }
        );
    }

    /// Randomized round-trip plus mutation fuzz: mutated frames may decode
    /// to a different message or fail, but never panic.
    #[test]
    fn fuzz_round_trip_and_mutations() {
        let mut state = 0x243F_6A88_85A3_08D3u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            state
        };
        for _ in 0..2_000 {
            let n = (next() % 17) as usize;
            let message = match next() % 4 {
                0 => Message::QueryBatch {
                    node_id: next() as u16,
                    batch_id: next() as u32,
                    keys: (0..n).map(|_| next() as u32).collect(),
                },
                1 => Message::ResultBatch {
                    node_id: next() as u16,
                    batch_id: next() as u32,
                    ranks: (0..n).map(|_| next()).collect(),
                },
                2 => Message::Shutdown { node_id: next() as u16 },
                _ => Message::Ready { node_id: next() as u16 },
            };
            let frame = encode_frame(&message).unwrap();
            let (decoded, consumed) = decode_frame(&frame).unwrap();
            assert_eq!(decoded, message);
            assert_eq!(consumed, frame.len());

            let mut mutated = frame.clone();
            let at = (next() as usize) % mutated.len();
            mutated[at] ^= (next() as u8) | 1;
            let _ = decode_frame(&mutated); // must not panic
        }
    }

    #[test]
    fn back_to_back_frames_peel_off_a_buffer() {
        let a = Message::QueryBatch { node_id: 1, batch_id: 10, keys: vec![5, 6] };
        let b = Message::ResultBatch { node_id: 2, batch_id: 10, ranks: vec![55, 66] };
        let c = Message::Shutdown { node_id: 1 };
        let mut stream = Vec::new();
        for message in [&a, &b, &c] {
            stream.extend_from_slice(&encode_frame(message).unwrap());
        }
        let (m1, used1) = decode_frame(&stream).unwrap();
        let (m2, used2) = decode_frame(&stream[used1..]).unwrap();
        let (m3, used3) = decode_frame(&stream[used1 + used2..]).unwrap();
        assert_eq!((m1, m2, m3), (a, b, c));
        assert_eq!(used1 + used2 + used3, stream.len());
    }
}
