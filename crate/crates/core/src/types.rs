//! Domain types shared by the device model, the wire protocol and the host.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Scheduler base tick. Every allowed sensor period is a multiple of it.
pub const TICK_US: u64 = 10_000;

/// Allowed PPG and IMU output data rates.
pub const MOTION_RATES_HZ: [u16; 3] = [25, 50, 100];
/// Allowed temperature output data rates.
pub const TEMP_RATES_HZ: [u16; 4] = [1, 5, 25, 100];

pub const MICROS_PER_SEC: u64 = 1_000_000;

/// UNIX time (us) corresponding to virtual time zero: 2026-01-01T00:00:00Z.
/// The host clock is exact: host epoch = `SIM_EPOCH_UNIX_US + virtual time`.
pub const SIM_EPOCH_UNIX_US: u64 = 1_767_225_600 * MICROS_PER_SEC;

/// One of the three sensing modalities on the ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Ppg = 0,
    Imu = 1,
    Temp = 2,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Ppg, Modality::Imu, Modality::Temp];

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Modality::Ppg),
            1 => Some(Modality::Imu),
            2 => Some(Modality::Temp),
            _ => None,
        }
    }

    /// Bit used for this modality in a record presence mask.
    pub const fn presence_bit(self) -> u8 {
        1 << (self as u8)
    }

    pub fn allowed_rates(self) -> &'static [u16] {
        match self {
            Modality::Ppg | Modality::Imu => &MOTION_RATES_HZ,
            Modality::Temp => &TEMP_RATES_HZ,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Ppg => "ppg",
            Modality::Imu => "imu",
            Modality::Temp => "temp",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ppg" => Ok(Modality::Ppg),
            "imu" => Ok(Modality::Imu),
            "temp" => Ok(Modality::Temp),
            other => Err(format!("unknown modality `{other}`")),
        }
    }
}

/// Firmware operating mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RingMode {
    Idle = 0,
    Streaming = 1,
    OfflineArmed = 2,
    Logging = 3,
    Downloading = 4,
}

impl RingMode {
    pub const ALL: [RingMode; 5] = [
        RingMode::Idle,
        RingMode::Streaming,
        RingMode::OfflineArmed,
        RingMode::Logging,
        RingMode::Downloading,
    ];

    pub fn from_u8(v: u8) -> Option<Self> {
        Self::ALL.get(v as usize).copied()
    }
}

impl fmt::Display for RingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RingMode::Idle => "idle",
            RingMode::Streaming => "streaming",
            RingMode::OfflineArmed => "offline_armed",
            RingMode::Logging => "logging",
            RingMode::Downloading => "downloading",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PpgConfig {
    pub enabled: bool,
    pub rate_hz: u16,
    /// Per-LED drive code, 0..=255 mapped linearly over 0..200 mA.
    pub led_codes: [u8; 3],
    pub pulse_width_us: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub enabled: bool,
    pub rate_hz: u16,
}

/// Remotely configurable acquisition settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub ppg: PpgConfig,
    pub imu: ChannelConfig,
    pub temp: ChannelConfig,
}

/// LED code the battery model treats as nominal drive.
pub const REFERENCE_LED_CODE: u8 = 128;

impl SensorConfig {
    /// All modalities on at their highest rate with nominal LED drive.
    pub fn reference() -> Self {
        SensorConfig {
            ppg: PpgConfig {
                enabled: true,
                rate_hz: 100,
                led_codes: [REFERENCE_LED_CODE; 3],
                pulse_width_us: 100,
            },
            imu: ChannelConfig { enabled: true, rate_hz: 100 },
            temp: ChannelConfig { enabled: true, rate_hz: 100 },
        }
    }

    pub fn all_disabled() -> Self {
        let mut c = Self::reference();
        c.ppg.enabled = false;
        c.imu.enabled = false;
        c.temp.enabled = false;
        c
    }

    pub fn enabled(&self, m: Modality) -> bool {
        match m {
            Modality::Ppg => self.ppg.enabled,
            Modality::Imu => self.imu.enabled,
            Modality::Temp => self.temp.enabled,
        }
    }

    pub fn set_enabled(&mut self, m: Modality, on: bool) {
        match m {
            Modality::Ppg => self.ppg.enabled = on,
            Modality::Imu => self.imu.enabled = on,
            Modality::Temp => self.temp.enabled = on,
        }
    }

    pub fn rate(&self, m: Modality) -> u16 {
        match m {
            Modality::Ppg => self.ppg.rate_hz,
            Modality::Imu => self.imu.rate_hz,
            Modality::Temp => self.temp.rate_hz,
        }
    }

    pub fn set_rate(&mut self, m: Modality, rate_hz: u16) {
        match m {
            Modality::Ppg => self.ppg.rate_hz = rate_hz,
            Modality::Imu => self.imu.rate_hz = rate_hz,
            Modality::Temp => self.temp.rate_hz = rate_hz,
        }
    }

    /// Number of base ticks between two samples of `m`.
    pub fn tick_divisor(&self, m: Modality) -> u64 {
        (MICROS_PER_SEC / TICK_US) / u64::from(self.rate(m))
    }

    /// True when every rate lies in its modality's allowed set.
    pub fn is_valid(&self) -> bool {
        Modality::ALL
            .iter()
            .all(|&m| m.allowed_rates().contains(&self.rate(m)))
    }
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self::reference()
    }
}

/// 32-bit UNIX seconds plus microseconds, as carried by calibration commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EpochTime {
    pub secs: u32,
    pub micros: u32,
}

impl EpochTime {
    pub fn from_micros(us: u64) -> Self {
        EpochTime {
            secs: (us / MICROS_PER_SEC) as u32,
            micros: (us % MICROS_PER_SEC) as u32,
        }
    }

    pub fn as_micros(self) -> u64 {
        u64::from(self.secs) * MICROS_PER_SEC + u64::from(self.micros)
    }
}

/// Metadata of one offline recording segment as reported by the device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LogFileEntry {
    pub file_id: u16,
    /// Device-epoch seconds of the first record.
    pub start_time: u32,
    pub size: u32,
    pub crc: u32,
}

impl LogFileEntry {
    /// Records held by the segment; every record is 38 bytes on flash.
    pub fn record_count(&self) -> u32 {
        self.size / 38
    }
}

/// 48-bit device address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mac(pub [u8; 6]);

impl Mac {
    /// Deterministic address for the n-th simulated ring.
    pub fn for_index(n: u32) -> Self {
        let b = n.to_be_bytes();
        Mac([0xC0, 0x7A, b[0], b[1], b[2], b[3]])
    }
}

impl fmt::Display for Mac {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.0;
        write!(
            f,
            "{:02X}:{:02X}:{:02X}:{:02X}:{:02X}:{:02X}",
            m[0], m[1], m[2], m[3], m[4], m[5]
        )
    }
}

impl FromStr for Mac {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 6 {
            return Err(format!("invalid mac `{s}`"));
        }
        let mut out = [0u8; 6];
        for (o, p) in out.iter_mut().zip(parts) {
            *o = u8::from_str_radix(p, 16).map_err(|_| format!("invalid mac `{s}`"))?;
        }
        Ok(Mac(out))
    }
}

impl Serialize for Mac {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Mac {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
