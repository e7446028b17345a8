use serde::{Deserialize, Serialize};

use super::{ProtoError, Reader};
use crate::types::Modality;

/// Bytes per record, on the wire and on flash.
pub const RECORD_LEN: usize = 38;
/// Largest value a 24-bit PPG ADC can produce.
pub const PPG_MAX: u32 = (1 << 24) - 1;

const TIMESTAMP_BITS: u32 = 56;
const TIMESTAMP_MASK: u64 = (1 << TIMESTAMP_BITS) - 1;

/// Bitmask of modalities carried by a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Presence(pub u8);

impl Presence {
    pub const ALL: Presence = Presence(0b111);

    pub fn contains(self, m: Modality) -> bool {
        self.0 & m.presence_bit() != 0
    }

    pub fn with(self, m: Modality) -> Self {
        Presence(self.0 | m.presence_bit())
    }
}

/// One synchronized multi-sensor sample.
///
/// Layout (38 bytes, little-endian):
///
/// | offset | size | field                                        |
/// |--------|------|----------------------------------------------|
/// | 0      | 8    | bits 0..56 timestamp (us), bits 56..64 presence |
/// | 8      | 12   | 3 x u32 PPG counts (24-bit)                  |
/// | 20     | 12   | 6 x i16 IMU (ax ay az gx gy gz)              |
/// | 32     | 6    | 3 x i16 temperature, centi-degrees C         |
///
/// Absent modalities are written as all-ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleRecord {
    /// Device-epoch microseconds.
    pub timestamp_us: u64,
    pub ppg: Option<[u32; 3]>,
    pub imu: Option<[i16; 6]>,
    pub temp: Option<[i16; 3]>,
}

impl SampleRecord {
    pub fn empty(timestamp_us: u64) -> Self {
        SampleRecord { timestamp_us, ppg: None, imu: None, temp: None }
    }

    pub fn presence(&self) -> Presence {
        let mut p = Presence::default();
        if self.ppg.is_some() {
            p = p.with(Modality::Ppg);
        }
        if self.imu.is_some() {
            p = p.with(Modality::Imu);
        }
        if self.temp.is_some() {
            p = p.with(Modality::Temp);
        }
        p
    }

    pub fn has(&self, m: Modality) -> bool {
        self.presence().contains(m)
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) -> Result<(), ProtoError> {
        if self.timestamp_us > TIMESTAMP_MASK {
            return Err(ProtoError::Malformed("timestamp exceeds 56 bits"));
        }
        let word = self.timestamp_us | (u64::from(self.presence().0) << TIMESTAMP_BITS);
        out.extend_from_slice(&word.to_le_bytes());
        match self.ppg {
            Some(ch) => {
                for v in ch {
                    if v > PPG_MAX {
                        return Err(ProtoError::Malformed("ppg value exceeds 24 bits"));
                    }
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            None => out.extend_from_slice(&[0xFF; 12]),
        }
        match self.imu {
            Some(ax) => ax.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            None => out.extend_from_slice(&[0xFF; 12]),
        }
        match self.temp {
            Some(t) => t.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            None => out.extend_from_slice(&[0xFF; 6]),
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<[u8; RECORD_LEN], ProtoError> {
        let mut v = Vec::with_capacity(RECORD_LEN);
        self.encode_into(&mut v)?;
        Ok(v.try_into().expect("record encodes to RECORD_LEN bytes"))
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, ProtoError> {
        let word = r.u64()?;
        let presence = Presence((word >> TIMESTAMP_BITS) as u8);
        if presence.0 & !Presence::ALL.0 != 0 {
            return Err(ProtoError::Malformed("unknown presence bits"));
        }
        let timestamp_us = word & TIMESTAMP_MASK;

        let mut ppg = [0u32; 3];
        for v in &mut ppg {
            *v = r.u32()?;
        }
        let mut imu = [0i16; 6];
        for v in &mut imu {
            *v = r.i16()?;
        }
        let mut temp = [0i16; 3];
        for v in &mut temp {
            *v = r.i16()?;
        }

        let ppg = if presence.contains(Modality::Ppg) {
            if ppg.iter().any(|&v| v > PPG_MAX) {
                return Err(ProtoError::Malformed("ppg value exceeds 24 bits"));
            }
            Some(ppg)
        } else {
            if ppg != [u32::MAX; 3] {
                return Err(ProtoError::Malformed("absent ppg must carry the sentinel"));
            }
            None
        };
        let imu = if presence.contains(Modality::Imu) {
            Some(imu)
        } else {
            if imu != [-1; 6] {
                return Err(ProtoError::Malformed("absent imu must carry the sentinel"));
            }
            None
        };
        let temp = if presence.contains(Modality::Temp) {
            Some(temp)
        } else {
            if temp != [-1; 3] {
                return Err(ProtoError::Malformed("absent temp must carry the sentinel"));
            }
            None
        };
        Ok(SampleRecord { timestamp_us, ppg, imu, temp })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ProtoError> {
        let mut r = Reader::new(bytes);
        let rec = Self::read(&mut r)?;
        r.finish()?;
        Ok(rec)
    }

    /// Parse a concatenation of records, as stored in a flash segment.
    pub fn parse_all(bytes: &[u8]) -> Result<Vec<Self>, ProtoError> {
        if !bytes.len().is_multiple_of(RECORD_LEN) {
            return Err(ProtoError::Malformed("segment length is not a multiple of 38"));
        }
        bytes.chunks_exact(RECORD_LEN).map(Self::from_bytes).collect()
    }
}

#[cfg(test)]
pub(crate) mod strategy {
    use super::*;
    use proptest::prelude::*;

    pub fn record() -> impl Strategy<Value = SampleRecord> {
        (
            0u64..(1 << 56),
            proptest::option::of(proptest::array::uniform3(0u32..=PPG_MAX)),
            proptest::option::of(proptest::array::uniform6(any::<i16>())),
            proptest::option::of(proptest::array::uniform3(any::<i16>())),
        )
            .prop_map(|(timestamp_us, ppg, imu, temp)| SampleRecord { timestamp_us, ppg, imu, temp })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_of_full_record() {
        let r = SampleRecord {
            timestamp_us: 0x0102_0304_0506,
            ppg: Some([1, 2, 0xFF_FFFF]),
            imu: Some([-1, 2, -3, 4, -5, 6]),
            temp: Some([3300, -100, 2500]),
        };
        let b = r.to_bytes().unwrap();
        assert_eq!(&b[..8], &[0x06, 0x05, 0x04, 0x03, 0x02, 0x01, 0x00, 0x07]);
        assert_eq!(&b[8..12], &[1, 0, 0, 0]);
        assert_eq!(&b[16..20], &[0xFF, 0xFF, 0xFF, 0x00]);
        assert_eq!(&b[20..22], &[0xFF, 0xFF]);
        assert_eq!(&b[32..34], &3300i16.to_le_bytes());
        assert_eq!(SampleRecord::from_bytes(&b).unwrap(), r);
    }

    #[test]
    fn absent_modalities_use_sentinel() {
        let r = SampleRecord { temp: Some([2500, 2500, 2500]), ..SampleRecord::empty(42) };
        let b = r.to_bytes().unwrap();
        assert_eq!(b[7], Modality::Temp.presence_bit());
        assert!(b[8..32].iter().all(|&x| x == 0xFF));
        assert!(!r.has(Modality::Ppg) && !r.has(Modality::Imu));
    }

    #[test]
    fn rejects_inconsistent_sentinel() {
        let r = SampleRecord::empty(1);
        let mut b = r.to_bytes().unwrap();
        b[10] = 0;
        assert!(SampleRecord::from_bytes(&b).is_err());
    }

    #[test]
    fn rejects_wide_ppg() {
        let r = SampleRecord { ppg: Some([PPG_MAX + 1, 0, 0]), ..SampleRecord::empty(1) };
        assert!(r.to_bytes().is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(r in strategy::record()) {
            let b = r.to_bytes().unwrap();
            prop_assert_eq!(SampleRecord::from_bytes(&b).unwrap(), r);
        }
    }
}
