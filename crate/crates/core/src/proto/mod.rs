//! Device <-> host wire protocol.
//!
//! Every message crosses the link as a [`Frame`]:
//!
//! ```text
//! +------+-------------+---------------+-------------+
//! | kind | len (u16le) | payload (len) | crc (u32le) |
//! +------+-------------+---------------+-------------+
//! ```
//!
//! The CRC is CRC-32/ISO-HDLC over `kind ++ payload`. Encoded frames never
//! exceed [`MTU`] bytes. Payload layouts per kind live in the submodules and
//! are documented with worked hex dumps in `PROTOCOL.md`.

mod command;
mod crc;
mod frame;
mod message;
mod packet;
mod record;

pub use command::{Command, Opcode, TargetMode};
pub use crc::{crc32, Crc32};
pub use frame::{decode_frame, encode_frame, Frame, FrameKind, FRAME_OVERHEAD, MTU};
pub use message::{
    decode_message, encode_message, Chunk, DeviceEvent, ErrorCode, FileListPage, Message,
    Response, StatusReport, CHUNK_DATA_MAX, FILE_LIST_PAGE,
};
pub use packet::{pack_samples, StreamPacket, MAX_RECORDS_PER_PACKET, WINDOW_US};
pub use record::{Presence, SampleRecord, PPG_MAX, RECORD_LEN};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtoError {
    #[error("encoded frame of {len} bytes exceeds the {MTU}-byte MTU")]
    OversizedPayload { len: usize },
    #[error("truncated input: need {needed} bytes, have {got}")]
    Truncated { needed: usize, got: usize },
    /// The frame failed its integrity check: the checksum does not match,
    /// or the length field disagrees with a checksum-valid extent.
    #[error("crc mismatch")]
    BadCrc,
    #[error("unknown frame kind {0:#04x}")]
    UnknownKind(u8),
    #[error("unknown opcode {0:#04x}")]
    UnknownOpcode(u8),
    #[error("malformed payload: {0}")]
    Malformed(&'static str),
    #[error("record at {timestamp_us} us falls outside window starting at {base_us} us")]
    WindowViolation { timestamp_us: u64, base_us: u64 },
}

/// Little-endian cursor over a payload. Every `read_*` reports `Truncated`
/// with the absolute position it needed.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], ProtoError> {
        let end = self.pos + n;
        if end > self.buf.len() {
            return Err(ProtoError::Truncated { needed: end, got: self.buf.len() });
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8, ProtoError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16, ProtoError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn i16(&mut self) -> Result<i16, ProtoError> {
        Ok(i16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, ProtoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, ProtoError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn bool(&mut self) -> Result<bool, ProtoError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(ProtoError::Malformed("boolean field must be 0 or 1")),
        }
    }

    pub(crate) fn rest(&mut self) -> &'a [u8] {
        let s = &self.buf[self.pos..];
        self.pos = self.buf.len();
        s
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    /// Fixed-schema payloads must be consumed exactly.
    pub(crate) fn finish(self) -> Result<(), ProtoError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(ProtoError::Malformed("trailing bytes after fixed-schema payload"))
        }
    }
}
