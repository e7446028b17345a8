use serde::{Deserialize, Serialize};

use super::{crc32, Crc32, Message, ProtoError};

/// Link MTU: no encoded frame may exceed this many bytes.
pub const MTU: usize = 1024;
/// kind (1) + length (2) + crc (4).
pub const FRAME_OVERHEAD: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameKind {
    Command = 0x01,
    Response = 0x02,
    StreamData = 0x03,
    FileList = 0x04,
    Chunk = 0x05,
    Event = 0x06,
}

impl FrameKind {
    pub const ALL: [FrameKind; 6] = [
        FrameKind::Command,
        FrameKind::Response,
        FrameKind::StreamData,
        FrameKind::FileList,
        FrameKind::Chunk,
        FrameKind::Event,
    ];

    pub fn from_u8(b: u8) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| *k as u8 == b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameKind,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(kind: FrameKind, payload: Vec<u8>) -> Self {
        Frame { kind, payload }
    }

    /// Checksum carried by the encoded frame.
    pub fn crc(&self) -> u32 {
        let mut h = Crc32::new();
        h.update(&[self.kind as u8]);
        h.update(&self.payload);
        h.finish()
    }

    pub fn encoded_len(&self) -> usize {
        FRAME_OVERHEAD + self.payload.len()
    }
}

/// Serialize a frame: kind, u16le payload length, payload, u32le crc.
pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>, ProtoError> {
    let len = frame.encoded_len();
    if len > MTU {
        return Err(ProtoError::OversizedPayload { len });
    }
    let mut out = Vec::with_capacity(len);
    out.push(frame.kind as u8);
    out.extend_from_slice(&(frame.payload.len() as u16).to_le_bytes());
    out.extend_from_slice(&frame.payload);
    out.extend_from_slice(&frame.crc().to_le_bytes());
    Ok(out)
}

/// Parse a complete frame buffer. Total over arbitrary input: the frame is
/// returned only if framing, checksum and the payload schema of its kind all
/// check out.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, ProtoError> {
    let frame = unframe(bytes)?;
    Message::from_frame(&frame)?;
    Ok(frame)
}

/// Framing and integrity only; no payload schema check.
pub(crate) fn unframe(bytes: &[u8]) -> Result<Frame, ProtoError> {
    let n = bytes.len();
    if n < FRAME_OVERHEAD {
        return Err(ProtoError::Truncated { needed: FRAME_OVERHEAD, got: n });
    }
    let declared = u16::from_le_bytes([bytes[1], bytes[2]]) as usize;
    let expected_len = FRAME_OVERHEAD + declared;
    let carried = u32::from_le_bytes(bytes[n - 4..].try_into().unwrap());
    let extent_crc = {
        let mut h = Crc32::new();
        h.update(&bytes[..1]);
        h.update(&bytes[3..n - 4]);
        h.finish()
    };

    if expected_len != n {
        // Either a short read, or a length field corrupted inside an
        // otherwise checksum-valid frame.
        if extent_crc == carried {
            return Err(ProtoError::BadCrc);
        }
        if expected_len > n {
            return Err(ProtoError::Truncated { needed: expected_len, got: n });
        }
        let declared_crc = {
            let mut h = Crc32::new();
            h.update(&bytes[..1]);
            h.update(&bytes[3..3 + declared]);
            h.finish()
        };
        let at = u32::from_le_bytes(bytes[3 + declared..expected_len].try_into().unwrap());
        return Err(if declared_crc == at {
            ProtoError::Malformed("trailing bytes after frame")
        } else {
            ProtoError::BadCrc
        });
    }

    if extent_crc != carried {
        return Err(ProtoError::BadCrc);
    }
    let kind = FrameKind::from_u8(bytes[0]).ok_or(ProtoError::UnknownKind(bytes[0]))?;
    let payload = bytes[3..n - 4].to_vec();
    debug_assert_eq!(crc32(&[&[bytes[0]][..], &payload].concat()), carried);
    Ok(Frame { kind, payload })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proto::{encode_message, Command};

    #[test]
    fn empty_payload_layout() {
        let f = Frame::new(FrameKind::Event, vec![]);
        let bytes = encode_frame(&f).unwrap();
        assert_eq!(bytes.len(), 7);
        assert_eq!(&bytes[..3], &[0x06, 0x00, 0x00]);
        assert_eq!(&bytes[3..], &crc32(&[0x06]).to_le_bytes());
    }

    #[test]
    fn get_status_is_eight_bytes() {
        let bytes = encode_message(&Message::Command(Command::GetStatus)).unwrap();
        // Frozen from an independent CRC-32 (zlib): crc32([0x01, 0x08]) = 0x5619AB8C.
        assert_eq!(bytes, vec![0x01, 0x01, 0x00, 0x08, 0x8C, 0xAB, 0x19, 0x56]);
        let f = decode_frame(&bytes).unwrap();
        assert_eq!(f.kind, FrameKind::Command);
        assert_eq!(f.payload, vec![0x08]);
    }

    #[test]
    fn short_input_is_truncated() {
        assert!(matches!(decode_frame(&[0x01, 0x00]), Err(ProtoError::Truncated { .. })));
        let bytes = encode_message(&Message::Command(Command::GetStatus)).unwrap();
        let mut longer = bytes.clone();
        longer[1] = 0x0D; // claims 13 payload bytes
        longer.truncate(7);
        assert!(decode_frame(&longer).is_err());
    }

    #[test]
    fn oversize_rejected() {
        let f = Frame::new(FrameKind::Chunk, vec![0; MTU - FRAME_OVERHEAD + 1]);
        assert_eq!(
            encode_frame(&f),
            Err(ProtoError::OversizedPayload { len: MTU + 1 })
        );
        let f = Frame::new(FrameKind::Chunk, vec![0; MTU - FRAME_OVERHEAD]);
        assert_eq!(encode_frame(&f).unwrap().len(), MTU);
    }

    #[test]
    fn unknown_kind_with_valid_crc() {
        let mut bytes = vec![0x7F, 0x00, 0x00];
        bytes.extend_from_slice(&crc32(&[0x7F]).to_le_bytes());
        assert_eq!(decode_frame(&bytes), Err(ProtoError::UnknownKind(0x7F)));
    }

    #[test]
    fn trailing_garbage_after_valid_frame() {
        let mut bytes = encode_message(&Message::Command(Command::GetStatus)).unwrap();
        bytes.extend_from_slice(&[0xAA, 0xBB]);
        assert_eq!(
            decode_frame(&bytes),
            Err(ProtoError::Malformed("trailing bytes after frame"))
        );
    }
}
