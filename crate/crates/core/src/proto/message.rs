//! Typed payloads for every frame kind.

use serde::{Deserialize, Serialize};

use super::frame::unframe;
use super::{
    encode_frame, Command, Frame, FrameKind, ProtoError, Reader, StreamPacket, FRAME_OVERHEAD,
    MTU,
};
use crate::types::{ChannelConfig, EpochTime, LogFileEntry, PpgConfig, RingMode, SensorConfig};

/// Data bytes per bulk chunk. A chunk frame is 13 bytes larger.
pub const CHUNK_DATA_MAX: usize = 1000;
/// File-list entries per page.
pub const FILE_LIST_PAGE: usize = 64;

const ENTRY_LEN: usize = 14;

/// Stable device-side error codes carried in error responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorCode {
    InvalidTransition = 1,
    BadArgument = 2,
    NoSuchFile = 3,
    FlashFull = 4,
}

impl ErrorCode {
    pub fn from_u8(b: u8) -> Option<Self> {
        match b {
            1 => Some(ErrorCode::InvalidTransition),
            2 => Some(ErrorCode::BadArgument),
            3 => Some(ErrorCode::NoSuchFile),
            4 => Some(ErrorCode::FlashFull),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusReport {
    pub mode: RingMode,
    pub config: SensorConfig,
    pub battery_pct: u8,
    pub flash_used: u32,
    pub flash_capacity: u32,
    pub file_count: u16,
    /// One bit per modality (see `Modality::presence_bit`).
    pub fault_flags: u8,
    pub fw_version: String,
}

impl StatusReport {
    pub fn flash_free(&self) -> u32 {
        self.flash_capacity - self.flash_used
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Response {
    Ack,
    Status(StatusReport),
    /// RTC reading taken when the probe arrived.
    CalibReading { device_time: EpochTime },
    FileOpened(LogFileEntry),
    Error(ErrorCode),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileListPage {
    pub total: u16,
    pub start_index: u16,
    pub entries: Vec<LogFileEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub file_id: u16,
    pub offset: u32,
    pub data: Vec<u8>,
}

/// Unsolicited device notifications.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeviceEvent {
    SegmentClosed(LogFileEntry),
    LoggingComplete { segments: u16 },
    FlashFull,
    BatteryEmpty,
    TraceExhausted,
    SessionEnded { packets: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Message {
    Command(Command),
    Response(Response),
    Stream(StreamPacket),
    FileList(FileListPage),
    Chunk(Chunk),
    Event(DeviceEvent),
}

fn write_config(out: &mut Vec<u8>, c: &SensorConfig) {
    out.push(c.ppg.enabled as u8);
    out.extend_from_slice(&c.ppg.rate_hz.to_le_bytes());
    out.extend_from_slice(&c.ppg.led_codes);
    out.extend_from_slice(&c.ppg.pulse_width_us.to_le_bytes());
    for ch in [c.imu, c.temp] {
        out.push(ch.enabled as u8);
        out.extend_from_slice(&ch.rate_hz.to_le_bytes());
    }
}

fn read_config(r: &mut Reader<'_>) -> Result<SensorConfig, ProtoError> {
    let enabled = r.bool()?;
    let rate_hz = r.u16()?;
    let codes = r.take(3)?;
    let ppg = PpgConfig {
        enabled,
        rate_hz,
        led_codes: [codes[0], codes[1], codes[2]],
        pulse_width_us: r.u16()?,
    };
    let imu = ChannelConfig { enabled: r.bool()?, rate_hz: r.u16()? };
    let temp = ChannelConfig { enabled: r.bool()?, rate_hz: r.u16()? };
    Ok(SensorConfig { ppg, imu, temp })
}

fn write_entry(out: &mut Vec<u8>, e: &LogFileEntry) {
    out.extend_from_slice(&e.file_id.to_le_bytes());
    out.extend_from_slice(&e.start_time.to_le_bytes());
    out.extend_from_slice(&e.size.to_le_bytes());
    out.extend_from_slice(&e.crc.to_le_bytes());
}

fn read_entry(r: &mut Reader<'_>) -> Result<LogFileEntry, ProtoError> {
    let e = LogFileEntry {
        file_id: r.u16()?,
        start_time: r.u32()?,
        size: r.u32()?,
        crc: r.u32()?,
    };
    if e.size == 0 {
        return Err(ProtoError::Malformed("file entries must have a non-zero size"));
    }
    Ok(e)
}

impl Response {
    fn encode_payload(&self, out: &mut Vec<u8>) {
        match self {
            Response::Ack => out.push(0x00),
            Response::Status(s) => {
                out.push(0x01);
                out.push(s.mode as u8);
                write_config(out, &s.config);
                out.push(s.battery_pct);
                out.extend_from_slice(&s.flash_used.to_le_bytes());
                out.extend_from_slice(&s.flash_capacity.to_le_bytes());
                out.extend_from_slice(&s.file_count.to_le_bytes());
                out.push(s.fault_flags);
                let fw = s.fw_version.as_bytes();
                let n = fw.len().min(u8::MAX as usize);
                out.push(n as u8);
                out.extend_from_slice(&fw[..n]);
            }
            Response::CalibReading { device_time } => {
                out.push(0x02);
                out.extend_from_slice(&device_time.secs.to_le_bytes());
                out.extend_from_slice(&device_time.micros.to_le_bytes());
            }
            Response::FileOpened(e) => {
                out.push(0x03);
                write_entry(out, e);
            }
            Response::Error(code) => {
                out.push(0x04);
                out.push(*code as u8);
            }
        }
    }

    fn decode_payload(payload: &[u8]) -> Result<Self, ProtoError> {
        let mut r = Reader::new(payload);
        let resp = match r.u8()? {
            0x00 => Response::Ack,
            0x01 => {
                let mode = RingMode::from_u8(r.u8()?).ok_or(ProtoError::Malformed("unknown mode"))?;
                let config = read_config(&mut r)?;
                let battery_pct = r.u8()?;
                if battery_pct > 100 {
                    return Err(ProtoError::Malformed("battery percentage above 100"));
                }
                let flash_used = r.u32()?;
                let flash_capacity = r.u32()?;
                if flash_used > flash_capacity {
                    return Err(ProtoError::Malformed("flash occupancy exceeds capacity"));
                }
                let file_count = r.u16()?;
                let fault_flags = r.u8()?;
                let n = r.u8()? as usize;
                let fw_version = std::str::from_utf8(r.take(n)?)
                    .map_err(|_| ProtoError::Malformed("firmware version is not utf-8"))?
                    .to_owned();
                Response::Status(StatusReport {
                    mode,
                    config,
                    battery_pct,
                    flash_used,
                    flash_capacity,
                    file_count,
                    fault_flags,
                    fw_version,
                })
            }
            0x02 => {
                let secs = r.u32()?;
                let micros = r.u32()?;
                if micros >= 1_000_000 {
                    return Err(ProtoError::Malformed("epoch microseconds out of range"));
                }
                Response::CalibReading { device_time: EpochTime { secs, micros } }
            }
            0x03 => Response::FileOpened(read_entry(&mut r)?),
            0x04 => Response::Error(
                ErrorCode::from_u8(r.u8()?).ok_or(ProtoError::Malformed("unknown error code"))?,
            ),
            _ => return Err(ProtoError::Malformed("unknown response tag")),
        };
        r.finish()?;
        Ok(resp)
    }
}

impl DeviceEvent {
    fn encode_payload(&self, out: &mut Vec<u8>) {
        match self {
            DeviceEvent::SegmentClosed(e) => {
                out.push(0x01);
                write_entry(out, e);
            }
            DeviceEvent::LoggingComplete { segments } => {
                out.push(0x02);
                out.extend_from_slice(&segments.to_le_bytes());
            }
            DeviceEvent::FlashFull => out.push(0x03),
            DeviceEvent::BatteryEmpty => out.push(0x04),
            DeviceEvent::TraceExhausted => out.push(0x05),
            DeviceEvent::SessionEnded { packets } => {
                out.push(0x06);
                out.extend_from_slice(&packets.to_le_bytes());
            }
        }
    }

    fn decode_payload(payload: &[u8]) -> Result<Self, ProtoError> {
        let mut r = Reader::new(payload);
        let ev = match r.u8()? {
            0x01 => DeviceEvent::SegmentClosed(read_entry(&mut r)?),
            0x02 => DeviceEvent::LoggingComplete { segments: r.u16()? },
            0x03 => DeviceEvent::FlashFull,
            0x04 => DeviceEvent::BatteryEmpty,
            0x05 => DeviceEvent::TraceExhausted,
            0x06 => DeviceEvent::SessionEnded { packets: r.u32()? },
            _ => return Err(ProtoError::Malformed("unknown event tag")),
        };
        r.finish()?;
        Ok(ev)
    }
}

impl Message {
    pub fn kind(&self) -> FrameKind {
        match self {
            Message::Command(_) => FrameKind::Command,
            Message::Response(_) => FrameKind::Response,
            Message::Stream(_) => FrameKind::StreamData,
            Message::FileList(_) => FrameKind::FileList,
            Message::Chunk(_) => FrameKind::Chunk,
            Message::Event(_) => FrameKind::Event,
        }
    }

    pub fn to_frame(&self) -> Result<Frame, ProtoError> {
        let mut p = Vec::new();
        match self {
            Message::Command(c) => c.encode_payload(&mut p),
            Message::Response(r) => r.encode_payload(&mut p),
            Message::Stream(s) => s.encode_payload(&mut p)?,
            Message::FileList(page) => {
                if page.entries.len() > FILE_LIST_PAGE {
                    return Err(ProtoError::OversizedPayload {
                        len: FRAME_OVERHEAD + 5 + page.entries.len() * ENTRY_LEN,
                    });
                }
                p.extend_from_slice(&page.total.to_le_bytes());
                p.extend_from_slice(&page.start_index.to_le_bytes());
                p.push(page.entries.len() as u8);
                page.entries.iter().for_each(|e| write_entry(&mut p, e));
            }
            Message::Chunk(c) => {
                p.extend_from_slice(&c.file_id.to_le_bytes());
                p.extend_from_slice(&c.offset.to_le_bytes());
                p.extend_from_slice(&c.data);
            }
            Message::Event(e) => e.encode_payload(&mut p),
        }
        if FRAME_OVERHEAD + p.len() > MTU {
            return Err(ProtoError::OversizedPayload { len: FRAME_OVERHEAD + p.len() });
        }
        Ok(Frame::new(self.kind(), p))
    }

    pub fn from_frame(frame: &Frame) -> Result<Self, ProtoError> {
        let p = &frame.payload;
        Ok(match frame.kind {
            FrameKind::Command => Message::Command(Command::decode_payload(p)?),
            FrameKind::Response => Message::Response(Response::decode_payload(p)?),
            FrameKind::StreamData => Message::Stream(StreamPacket::decode_payload(p)?),
            FrameKind::FileList => {
                let mut r = Reader::new(p);
                let total = r.u16()?;
                let start_index = r.u16()?;
                let count = r.u8()? as usize;
                if count > FILE_LIST_PAGE || r.remaining() != count * ENTRY_LEN {
                    return Err(ProtoError::Malformed("file list count disagrees with payload"));
                }
                let entries = (0..count)
                    .map(|_| read_entry(&mut r))
                    .collect::<Result<Vec<_>, _>>()?;
                r.finish()?;
                Message::FileList(FileListPage { total, start_index, entries })
            }
            FrameKind::Chunk => {
                let mut r = Reader::new(p);
                let file_id = r.u16()?;
                let offset = r.u32()?;
                let data = r.rest().to_vec();
                if data.len() > CHUNK_DATA_MAX {
                    return Err(ProtoError::Malformed("chunk exceeds maximum data length"));
                }
                Message::Chunk(Chunk { file_id, offset, data })
            }
            FrameKind::Event => Message::Event(DeviceEvent::decode_payload(p)?),
        })
    }
}

pub fn encode_message(msg: &Message) -> Result<Vec<u8>, ProtoError> {
    encode_frame(&msg.to_frame()?)
}

pub fn decode_message(bytes: &[u8]) -> Result<Message, ProtoError> {
    Message::from_frame(&unframe(bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proto::command::strategy::command;
    use crate::proto::record::strategy::record;
    use crate::proto::{decode_frame, pack_samples, SampleRecord, MAX_RECORDS_PER_PACKET, WINDOW_US};
    use proptest::prelude::*;

    fn entry() -> impl Strategy<Value = LogFileEntry> {
        (any::<u16>(), any::<u32>(), 1u32.., any::<u32>()).prop_map(|(file_id, start_time, size, crc)| {
            LogFileEntry { file_id, start_time, size, crc }
        })
    }

    fn packet() -> impl Strategy<Value = StreamPacket> {
        (any::<u32>(), 0u64..(1 << 50), proptest::collection::vec(record(), 0..=5)).prop_map(
            |(seq, base, recs)| {
                let records: Vec<SampleRecord> = recs
                    .into_iter()
                    .enumerate()
                    .map(|(i, mut r)| {
                        r.timestamp_us = base + (i as u64) * (WINDOW_US / 5);
                        r
                    })
                    .collect();
                pack_samples(records, seq, base).unwrap()
            },
        )
    }

    fn message() -> impl Strategy<Value = Message> {
        let status = (any::<u8>(), 0u8..=100, any::<u32>(), any::<u8>(), "[a-z0-9.]{0,16}").prop_map(
            |(mode, battery_pct, used, fault_flags, fw_version)| {
                Response::Status(StatusReport {
                    mode: RingMode::from_u8(mode % 5).unwrap(),
                    config: SensorConfig::reference(),
                    battery_pct,
                    flash_used: used / 2,
                    flash_capacity: used / 2 + 1,
                    file_count: 3,
                    fault_flags,
                    fw_version,
                })
            },
        );
        let response = prop_oneof![
            Just(Response::Ack),
            status,
            (any::<u32>(), 0u32..1_000_000).prop_map(|(secs, micros)| Response::CalibReading {
                device_time: EpochTime { secs, micros }
            }),
            entry().prop_map(Response::FileOpened),
            prop_oneof![
                Just(ErrorCode::InvalidTransition),
                Just(ErrorCode::BadArgument),
                Just(ErrorCode::NoSuchFile),
                Just(ErrorCode::FlashFull)
            ]
            .prop_map(Response::Error),
        ];
        let event = prop_oneof![
            entry().prop_map(DeviceEvent::SegmentClosed),
            any::<u16>().prop_map(|segments| DeviceEvent::LoggingComplete { segments }),
            Just(DeviceEvent::FlashFull),
            Just(DeviceEvent::BatteryEmpty),
            Just(DeviceEvent::TraceExhausted),
            any::<u32>().prop_map(|packets| DeviceEvent::SessionEnded { packets }),
        ];
        prop_oneof![
            command().prop_map(Message::Command),
            response.prop_map(Message::Response),
            packet().prop_map(Message::Stream),
            (any::<u16>(), any::<u16>(), proptest::collection::vec(entry(), 0..8)).prop_map(
                |(total, start_index, entries)| Message::FileList(FileListPage {
                    total,
                    start_index,
                    entries
                })
            ),
            (any::<u16>(), any::<u32>(), proptest::collection::vec(any::<u8>(), 0..=CHUNK_DATA_MAX))
                .prop_map(|(file_id, offset, data)| Message::Chunk(Chunk { file_id, offset, data })),
            event.prop_map(Message::Event),
        ]
    }

    proptest! {
        #[test]
        fn decode_encode_identity(msg in message()) {
            let bytes = encode_message(&msg).unwrap();
            prop_assert!(bytes.len() <= MTU);
            prop_assert_eq!(decode_message(&bytes).unwrap(), msg.clone());
            let frame = decode_frame(&bytes).unwrap();
            prop_assert_eq!(frame.crc(), u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap()));
        }

        #[test]
        fn decode_is_total(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let _ = decode_frame(&bytes);
        }

        #[test]
        fn every_single_bit_flip_detected(msg in message(), pick in any::<proptest::sample::Index>()) {
            let bytes = encode_message(&msg).unwrap();
            let bit = pick.index(bytes.len() * 8);
            let mut bad = bytes.clone();
            bad[bit / 8] ^= 1 << (bit % 8);
            prop_assert!(decode_frame(&bad).is_err());
        }
    }

    #[test]
    fn five_record_packet_roundtrip() {
        let base = 1_767_225_600_000_000;
        let records = (0..5)
            .map(|i| SampleRecord {
                timestamp_us: base + i * 10_000,
                ppg: Some([100_000 + i as u32, 200_000, 300_000]),
                imu: Some([0, 0, 2048, 0, 0, 0]),
                temp: (i == 0).then_some([3300, 3290, 2500]),
            })
            .collect();
        let p = pack_samples(records, 9, base).unwrap();
        let msg = Message::Stream(p);
        let bytes = encode_message(&msg).unwrap();
        assert_eq!(bytes.len(), 7 + 13 + 5 * 38);
        assert_eq!(decode_message(&bytes).unwrap(), msg);
    }

    #[test]
    fn full_packet_fits_mtu() {
        let records = (0..MAX_RECORDS_PER_PACKET as u64)
            .map(|i| SampleRecord { ppg: Some([0; 3]), ..SampleRecord::empty(i) })
            .collect();
        let p = pack_samples(records, 0, 0).unwrap();
        assert!(encode_message(&Message::Stream(p)).unwrap().len() <= MTU);
    }

    /// Exhaustive single-bit-flip check on a 20-byte frame.
    #[test]
    fn twenty_byte_frame_all_flips_bad_crc() {
        let msg = Message::Command(Command::ReadChunk { file_id: 3, offset: 19_000, max_len: 1000 });
        let mut bytes = encode_message(&msg).unwrap();
        assert_eq!(bytes.len(), 16);
        // Pad to 20 bytes with a chunk frame of 7 data bytes instead.
        let msg = Message::Chunk(Chunk { file_id: 1, offset: 2, data: vec![9; 7] });
        bytes = encode_message(&msg).unwrap();
        assert_eq!(bytes.len(), 20);
        for bit in 0..bytes.len() * 8 {
            let mut bad = bytes.clone();
            bad[bit / 8] ^= 1 << (bit % 8);
            assert_eq!(decode_frame(&bad), Err(ProtoError::BadCrc), "bit {bit}");
        }
    }

    #[test]
    fn chunk_frame_max() {
        let c = Message::Chunk(Chunk { file_id: 1, offset: 0, data: vec![0; CHUNK_DATA_MAX] });
        assert_eq!(encode_message(&c).unwrap().len(), CHUNK_DATA_MAX + 13);
    }
}
