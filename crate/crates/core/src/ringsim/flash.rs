use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::proto::{Crc32, RECORD_LEN};
use crate::types::LogFileEntry;

/// 128 MiB storage flash.
pub const FLASH_CAPACITY: u64 = 128 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FlashError {
    #[error("flash full")]
    Full,
    #[error("no segment is open")]
    NotOpen,
    #[error("a segment is already open")]
    AlreadyOpen,
    #[error("file id space exhausted")]
    IdsExhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogSegment {
    pub entry: LogFileEntry,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone)]
struct OpenSegment {
    file_id: u16,
    start_time: u32,
    payload: Vec<u8>,
    crc: Crc32,
}

/// Segmented log store. Occupancy counts closed segments plus the open one.
#[derive(Debug, Clone)]
pub struct FlashStore {
    capacity: u64,
    segments: Vec<LogSegment>,
    open: Option<OpenSegment>,
    closed_bytes: u64,
    next_id: u16,
}

impl Default for FlashStore {
    fn default() -> Self {
        Self::with_capacity(FLASH_CAPACITY)
    }
}

impl FlashStore {
    pub fn with_capacity(capacity: u64) -> Self {
        FlashStore { capacity, segments: Vec::new(), open: None, closed_bytes: 0, next_id: 1 }
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn used(&self) -> u64 {
        self.closed_bytes + self.open.as_ref().map_or(0, |o| o.payload.len() as u64)
    }

    pub fn free(&self) -> u64 {
        self.capacity - self.used()
    }

    pub fn entries(&self) -> Vec<LogFileEntry> {
        self.segments.iter().map(|s| s.entry).collect()
    }

    pub fn segments(&self) -> &[LogSegment] {
        &self.segments
    }

    pub fn segment(&self, file_id: u16) -> Option<&LogSegment> {
        self.segments.iter().find(|s| s.entry.file_id == file_id)
    }

    pub fn is_open(&self) -> bool {
        self.open.is_some()
    }

    /// Bytes in the currently open segment.
    pub fn open_len(&self) -> usize {
        self.open.as_ref().map_or(0, |o| o.payload.len())
    }

    pub fn open_segment(&mut self, start_time: u32) -> Result<(), FlashError> {
        if self.open.is_some() {
            return Err(FlashError::AlreadyOpen);
        }
        if self.next_id == u16::MAX {
            return Err(FlashError::IdsExhausted);
        }
        let file_id = self.next_id;
        self.next_id += 1;
        self.open = Some(OpenSegment { file_id, start_time, payload: Vec::new(), crc: Crc32::new() });
        Ok(())
    }

    /// Append bytes to the open segment; all-or-nothing.
    pub fn append(&mut self, bytes: &[u8]) -> Result<(), FlashError> {
        if self.used() + bytes.len() as u64 > self.capacity {
            return Err(FlashError::Full);
        }
        let open = self.open.as_mut().ok_or(FlashError::NotOpen)?;
        open.payload.extend_from_slice(bytes);
        open.crc.update(bytes);
        Ok(())
    }

    /// Whether one more on-flash record fits.
    pub fn has_room_for_record(&self) -> bool {
        self.used() + RECORD_LEN as u64 <= self.capacity
    }

    /// Finalize the open segment. Empty segments are discarded and yield
    /// `None`, so every listed entry has a non-zero size.
    pub fn close_segment(&mut self) -> Result<Option<LogFileEntry>, FlashError> {
        let open = self.open.take().ok_or(FlashError::NotOpen)?;
        if open.payload.is_empty() {
            return Ok(None);
        }
        let entry = LogFileEntry {
            file_id: open.file_id,
            start_time: open.start_time,
            size: open.payload.len() as u32,
            crc: open.crc.finish(),
        };
        self.closed_bytes += open.payload.len() as u64;
        self.segments.push(LogSegment { entry, payload: open.payload });
        Ok(Some(entry))
    }

    /// Store a complete segment in one step.
    pub fn store_segment(&mut self, start_time: u32, payload: &[u8]) -> Result<Option<LogFileEntry>, FlashError> {
        if self.used() + payload.len() as u64 > self.capacity {
            return Err(FlashError::Full);
        }
        self.open_segment(start_time)?;
        self.append(payload)?;
        self.close_segment()
    }

    pub fn read(&self, file_id: u16, offset: usize, max_len: usize) -> Option<&[u8]> {
        let seg = self.segment(file_id)?;
        let start = offset.min(seg.payload.len());
        let end = (start + max_len).min(seg.payload.len());
        Some(&seg.payload[start..end])
    }
}
