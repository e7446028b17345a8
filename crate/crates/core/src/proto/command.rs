use serde::{Deserialize, Serialize};

use super::{ProtoError, Reader};
use crate::types::{EpochTime, Modality};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Opcode {
    SetMode = 0x01,
    SensorEnable = 0x02,
    SetRate = 0x03,
    SetLed = 0x04,
    CalibProbe = 0x05,
    CalibTrim = 0x06,
    ScheduleOffline = 0x07,
    GetStatus = 0x08,
    GetFileList = 0x09,
    OpenFile = 0x0A,
    ReadChunk = 0x0B,
    CloseFile = 0x0C,
}

impl Opcode {
    pub const ALL: [Opcode; 12] = [
        Opcode::SetMode,
        Opcode::SensorEnable,
        Opcode::SetRate,
        Opcode::SetLed,
        Opcode::CalibProbe,
        Opcode::CalibTrim,
        Opcode::ScheduleOffline,
        Opcode::GetStatus,
        Opcode::GetFileList,
        Opcode::OpenFile,
        Opcode::ReadChunk,
        Opcode::CloseFile,
    ];

    pub fn from_u8(b: u8) -> Option<Self> {
        Self::ALL.iter().copied().find(|o| *o as u8 == b)
    }
}

/// Modes a host may request directly; offline modes go through `ScheduleOffline`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TargetMode {
    Idle = 0,
    Streaming = 1,
}

/// Host-to-device command. Each opcode has a fixed argument layout (all
/// little-endian), listed next to its variant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Command {
    /// `mode u8 | duration_ms u32`; a zero duration streams until stopped.
    SetMode { mode: TargetMode, duration_ms: u32 },
    /// `modality u8 | enabled u8`
    SensorEnable { modality: Modality, enabled: bool },
    /// `modality u8 | rate_hz u16`
    SetRate { modality: Modality, rate_hz: u16 },
    /// `led_codes 3 x u8 | pulse_width_us u16`
    SetLed { led_codes: [u8; 3], pulse_width_us: u16 },
    /// `secs u32 | micros u32`: host clock at send.
    CalibProbe { host_time: EpochTime },
    /// `secs u32 | micros u32`: epoch the RTC should read at receipt.
    CalibTrim { epoch: EpochTime },
    /// `start_delay_s u32 | total_s u32 | segment_s u32`
    ScheduleOffline { start_delay_s: u32, total_s: u32, segment_s: u32 },
    /// no arguments
    GetStatus,
    /// `start_index u16`
    GetFileList { start_index: u16 },
    /// `file_id u16`
    OpenFile { file_id: u16 },
    /// `file_id u16 | offset u32 | max_len u16`
    ReadChunk { file_id: u16, offset: u32, max_len: u16 },
    /// `file_id u16`
    CloseFile { file_id: u16 },
}

fn read_epoch(r: &mut Reader<'_>) -> Result<EpochTime, ProtoError> {
    let secs = r.u32()?;
    let micros = r.u32()?;
    if micros >= 1_000_000 {
        return Err(ProtoError::Malformed("epoch microseconds out of range"));
    }
    Ok(EpochTime { secs, micros })
}

fn write_epoch(out: &mut Vec<u8>, e: EpochTime) {
    out.extend_from_slice(&e.secs.to_le_bytes());
    out.extend_from_slice(&e.micros.to_le_bytes());
}

fn read_modality(r: &mut Reader<'_>) -> Result<Modality, ProtoError> {
    Modality::from_u8(r.u8()?).ok_or(ProtoError::Malformed("unknown modality"))
}

impl Command {
    pub fn opcode(&self) -> Opcode {
        match self {
            Command::SetMode { .. } => Opcode::SetMode,
            Command::SensorEnable { .. } => Opcode::SensorEnable,
            Command::SetRate { .. } => Opcode::SetRate,
            Command::SetLed { .. } => Opcode::SetLed,
            Command::CalibProbe { .. } => Opcode::CalibProbe,
            Command::CalibTrim { .. } => Opcode::CalibTrim,
            Command::ScheduleOffline { .. } => Opcode::ScheduleOffline,
            Command::GetStatus => Opcode::GetStatus,
            Command::GetFileList { .. } => Opcode::GetFileList,
            Command::OpenFile { .. } => Opcode::OpenFile,
            Command::ReadChunk { .. } => Opcode::ReadChunk,
            Command::CloseFile { .. } => Opcode::CloseFile,
        }
    }

    /// Commands that only read device state; safe to re-execute on retry.
    pub fn is_read_only(&self) -> bool {
        matches!(
            self,
            Command::CalibProbe { .. } | Command::GetStatus | Command::GetFileList { .. }
        )
    }

    pub(crate) fn encode_payload(&self, out: &mut Vec<u8>) {
        out.push(self.opcode() as u8);
        match *self {
            Command::SetMode { mode, duration_ms } => {
                out.push(mode as u8);
                out.extend_from_slice(&duration_ms.to_le_bytes());
            }
            Command::SensorEnable { modality, enabled } => {
                out.push(modality as u8);
                out.push(enabled as u8);
            }
            Command::SetRate { modality, rate_hz } => {
                out.push(modality as u8);
                out.extend_from_slice(&rate_hz.to_le_bytes());
            }
            Command::SetLed { led_codes, pulse_width_us } => {
                out.extend_from_slice(&led_codes);
                out.extend_from_slice(&pulse_width_us.to_le_bytes());
            }
            Command::CalibProbe { host_time } => write_epoch(out, host_time),
            Command::CalibTrim { epoch } => write_epoch(out, epoch),
            Command::ScheduleOffline { start_delay_s, total_s, segment_s } => {
                out.extend_from_slice(&start_delay_s.to_le_bytes());
                out.extend_from_slice(&total_s.to_le_bytes());
                out.extend_from_slice(&segment_s.to_le_bytes());
            }
            Command::GetStatus => {}
            Command::GetFileList { start_index } => {
                out.extend_from_slice(&start_index.to_le_bytes())
            }
            Command::OpenFile { file_id } | Command::CloseFile { file_id } => {
                out.extend_from_slice(&file_id.to_le_bytes())
            }
            Command::ReadChunk { file_id, offset, max_len } => {
                out.extend_from_slice(&file_id.to_le_bytes());
                out.extend_from_slice(&offset.to_le_bytes());
                out.extend_from_slice(&max_len.to_le_bytes());
            }
        }
    }

    pub(crate) fn decode_payload(payload: &[u8]) -> Result<Self, ProtoError> {
        let mut r = Reader::new(payload);
        let op_byte = r.u8()?;
        let op = Opcode::from_u8(op_byte).ok_or(ProtoError::UnknownOpcode(op_byte))?;
        let cmd = match op {
            Opcode::SetMode => {
                let mode = match r.u8()? {
                    0 => TargetMode::Idle,
                    1 => TargetMode::Streaming,
                    _ => return Err(ProtoError::Malformed("unknown target mode")),
                };
                Command::SetMode { mode, duration_ms: r.u32()? }
            }
            Opcode::SensorEnable => Command::SensorEnable {
                modality: read_modality(&mut r)?,
                enabled: r.bool()?,
            },
            Opcode::SetRate => Command::SetRate {
                modality: read_modality(&mut r)?,
                rate_hz: r.u16()?,
            },
            Opcode::SetLed => {
                let codes = r.take(3)?;
                Command::SetLed {
                    led_codes: [codes[0], codes[1], codes[2]],
                    pulse_width_us: r.u16()?,
                }
            }
            Opcode::CalibProbe => Command::CalibProbe { host_time: read_epoch(&mut r)? },
            Opcode::CalibTrim => Command::CalibTrim { epoch: read_epoch(&mut r)? },
            Opcode::ScheduleOffline => Command::ScheduleOffline {
                start_delay_s: r.u32()?,
                total_s: r.u32()?,
                segment_s: r.u32()?,
            },
            Opcode::GetStatus => Command::GetStatus,
            Opcode::GetFileList => Command::GetFileList { start_index: r.u16()? },
            Opcode::OpenFile => Command::OpenFile { file_id: r.u16()? },
            Opcode::ReadChunk => Command::ReadChunk {
                file_id: r.u16()?,
                offset: r.u32()?,
                max_len: r.u16()?,
            },
            Opcode::CloseFile => Command::CloseFile { file_id: r.u16()? },
        };
        r.finish()?;
        Ok(cmd)
    }
}

#[cfg(test)]
pub(crate) mod strategy {
    use super::*;
    use proptest::prelude::*;

    fn modality() -> impl Strategy<Value = Modality> {
        prop_oneof![Just(Modality::Ppg), Just(Modality::Imu), Just(Modality::Temp)]
    }

    fn epoch() -> impl Strategy<Value = EpochTime> {
        (any::<u32>(), 0u32..1_000_000).prop_map(|(secs, micros)| EpochTime { secs, micros })
    }

    pub fn command() -> impl Strategy<Value = Command> {
        prop_oneof![
            (prop_oneof![Just(TargetMode::Idle), Just(TargetMode::Streaming)], any::<u32>())
                .prop_map(|(mode, duration_ms)| Command::SetMode { mode, duration_ms }),
            (modality(), any::<bool>())
                .prop_map(|(modality, enabled)| Command::SensorEnable { modality, enabled }),
            (modality(), any::<u16>())
                .prop_map(|(modality, rate_hz)| Command::SetRate { modality, rate_hz }),
            (any::<[u8; 3]>(), any::<u16>()).prop_map(|(led_codes, pulse_width_us)| {
                Command::SetLed { led_codes, pulse_width_us }
            }),
            epoch().prop_map(|host_time| Command::CalibProbe { host_time }),
            epoch().prop_map(|epoch| Command::CalibTrim { epoch }),
            (any::<u32>(), any::<u32>(), any::<u32>()).prop_map(|(a, b, c)| {
                Command::ScheduleOffline { start_delay_s: a, total_s: b, segment_s: c }
            }),
            Just(Command::GetStatus),
            any::<u16>().prop_map(|start_index| Command::GetFileList { start_index }),
            any::<u16>().prop_map(|file_id| Command::OpenFile { file_id }),
            (any::<u16>(), any::<u32>(), any::<u16>()).prop_map(|(file_id, offset, max_len)| {
                Command::ReadChunk { file_id, offset, max_len }
            }),
            any::<u16>().prop_map(|file_id| Command::CloseFile { file_id }),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_opcode_rejected() {
        assert_eq!(Command::decode_payload(&[0x42]), Err(ProtoError::UnknownOpcode(0x42)));
        assert_eq!(Command::decode_payload(&[0x00]), Err(ProtoError::UnknownOpcode(0x00)));
    }

    #[test]
    fn fixed_schema_enforced() {
        // GetStatus takes no arguments.
        assert!(Command::decode_payload(&[0x08, 0x00]).is_err());
        // SetRate needs three argument bytes.
        assert!(matches!(
            Command::decode_payload(&[0x03, 0x00, 0x64]),
            Err(ProtoError::Truncated { .. })
        ));
        // Modality out of range.
        assert!(Command::decode_payload(&[0x02, 0x07, 0x01]).is_err());
    }

    #[test]
    fn set_rate_layout() {
        let mut out = vec![];
        Command::SetRate { modality: Modality::Imu, rate_hz: 100 }.encode_payload(&mut out);
        assert_eq!(out, vec![0x03, 0x01, 0x64, 0x00]);
    }
}
