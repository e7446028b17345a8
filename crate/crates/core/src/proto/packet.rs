use serde::{Deserialize, Serialize};

use super::{ProtoError, Reader, SampleRecord, FRAME_OVERHEAD, MTU, RECORD_LEN};

/// Streaming window: one packet per 50 ms of acquisition.
pub const WINDOW_US: u64 = 50_000;

const HEADER_LEN: usize = 4 + 8 + 1;

/// Most records a single stream frame can carry within the MTU.
pub const MAX_RECORDS_PER_PACKET: usize = (MTU - FRAME_OVERHEAD - HEADER_LEN) / RECORD_LEN;

/// Records of one 50 ms window.
///
/// Payload: `seq u32 | base_timestamp u64 | count u8 | count x 38-byte record`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamPacket {
    pub seq: u32,
    pub base_timestamp_us: u64,
    pub records: Vec<SampleRecord>,
}

impl StreamPacket {
    pub fn window_end_us(&self) -> u64 {
        self.base_timestamp_us + WINDOW_US
    }

    pub(crate) fn encode_payload(&self, out: &mut Vec<u8>) -> Result<(), ProtoError> {
        if self.records.len() > MAX_RECORDS_PER_PACKET {
            return Err(ProtoError::OversizedPayload {
                len: FRAME_OVERHEAD + HEADER_LEN + self.records.len() * RECORD_LEN,
            });
        }
        out.extend_from_slice(&self.seq.to_le_bytes());
        out.extend_from_slice(&self.base_timestamp_us.to_le_bytes());
        out.push(self.records.len() as u8);
        for r in &self.records {
            r.encode_into(out)?;
        }
        Ok(())
    }

    pub(crate) fn decode_payload(payload: &[u8]) -> Result<Self, ProtoError> {
        let mut r = Reader::new(payload);
        let seq = r.u32()?;
        let base = r.u64()?;
        let count = r.u8()? as usize;
        if r.remaining() != count * RECORD_LEN {
            return Err(ProtoError::Malformed("record count disagrees with payload length"));
        }
        let mut records = Vec::with_capacity(count);
        for _ in 0..count {
            records.push(SampleRecord::read(&mut r)?);
        }
        r.finish()?;
        pack_samples(records, seq, base)
    }
}

/// Assemble one window's records into a packet, checking that every record
/// lies in `[base, base + 50 ms)` and that records are strictly time-ordered.
pub fn pack_samples(
    records: Vec<SampleRecord>,
    seq: u32,
    base_timestamp_us: u64,
) -> Result<StreamPacket, ProtoError> {
    let end = base_timestamp_us + WINDOW_US;
    let mut prev: Option<u64> = None;
    for r in &records {
        if r.timestamp_us < base_timestamp_us || r.timestamp_us >= end {
            return Err(ProtoError::WindowViolation {
                timestamp_us: r.timestamp_us,
                base_us: base_timestamp_us,
            });
        }
        if prev.is_some_and(|p| p >= r.timestamp_us) {
            return Err(ProtoError::Malformed("records are not strictly time-ordered"));
        }
        prev = Some(r.timestamp_us);
    }
    Ok(StreamPacket { seq, base_timestamp_us, records })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: u64) -> SampleRecord {
        SampleRecord { ppg: Some([1, 2, 3]), ..SampleRecord::empty(t) }
    }

    #[test]
    fn capacity() {
        assert_eq!(MAX_RECORDS_PER_PACKET, 26);
    }

    #[test]
    fn window_bounds() {
        let base = 1_000_000;
        assert!(pack_samples(vec![rec(base), rec(base + 49_999)], 0, base).is_ok());
        assert!(matches!(
            pack_samples(vec![rec(base + 50_000)], 0, base),
            Err(ProtoError::WindowViolation { .. })
        ));
        assert!(matches!(
            pack_samples(vec![rec(base - 1)], 0, base),
            Err(ProtoError::WindowViolation { .. })
        ));
        assert!(pack_samples(vec![rec(base + 10), rec(base + 10)], 0, base).is_err());
    }

    #[test]
    fn empty_window_is_a_packet() {
        let p = pack_samples(vec![], 7, 0).unwrap();
        assert_eq!(p.seq, 7);
        assert!(p.records.is_empty());
    }
}
