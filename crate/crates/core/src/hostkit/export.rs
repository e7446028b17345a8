//! Session directories.
//!
//! ```text
//! <dir>/session.json   metadata (SessionMeta)
//! <dir>/ppg.csv        timestamp_us,green,red,ir          (counts)
//! <dir>/imu.csv        timestamp_us,ax,ay,az,gx,gy,gz     (raw LSB)
//! <dir>/temp.csv       timestamp_us,inner_a,inner_b,outer (centi-degC)
//! <dir>/records.bin    38-byte records, concatenated      (binary format)
//! ```
//!
//! Only the tables for the chosen format are written. Field names in
//! `session.json` and the CSV headers are a stable contract.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::offline::records_crc;
use super::{Annotation, CalibrationReport, Gap, HostError, LiveMetrics, Session};
use crate::proto::SampleRecord;
use crate::types::{Mac, SensorConfig};

pub const SESSION_FORMAT: &str = "ringlab-session/1";
const META_FILE: &str = "session.json";
const BINARY_FILE: &str = "records.bin";
const PPG_HEADER: [&str; 4] = ["timestamp_us", "green", "red", "ir"];
const IMU_HEADER: [&str; 7] = ["timestamp_us", "ax", "ay", "az", "gx", "gy", "gz"];
const TEMP_HEADER: [&str; 4] = ["timestamp_us", "inner_a", "inner_b", "outer"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub format: String,
    pub samples: ExportFormat,
    pub session_id: String,
    pub mac: Mac,
    pub config: SensorConfig,
    pub calibration: Option<CalibrationReport>,
    pub clock_offset_us: i64,
    pub start_us: u64,
    pub end_us: Option<u64>,
    pub record_count: usize,
    /// CRC-32 of all records in 38-byte encoding, whatever the table format.
    pub records_crc: u32,
    pub packets_received: u32,
    pub annotations: Vec<Annotation>,
    pub gaps: Vec<Gap>,
    pub metrics: Vec<LiveMetrics>,
}

fn csv_err(e: csv::Error) -> HostError {
    HostError::Malformed(e.to_string())
}

fn write_table<const N: usize>(
    path: PathBuf,
    header: [&str; N],
    rows: impl Iterator<Item = [String; N]>,
) -> Result<(), HostError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Rows of a table as (timestamp, values).
fn read_table<T: std::str::FromStr, const N: usize>(
    path: PathBuf,
    header: [&str; N],
) -> Result<Vec<(u64, Vec<T>)>, HostError> {
    let mut r = csv::Reader::from_path(&path).map_err(csv_err)?;
    let found: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if found != header {
        return Err(HostError::Malformed(format!("{}: unexpected header {found:?}", path.display())));
    }
    let bad = |line: usize| HostError::Malformed(format!("{}: bad row {line}", path.display()));
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let t: u64 = row[0].parse().map_err(|_| bad(i + 2))?;
        let vals = row.iter().skip(1).map(|v| v.parse::<T>().map_err(|_| bad(i + 2))).collect::<Result<_, _>>()?;
        out.push((t, vals));
    }
    Ok(out)
}

fn row<T: ToString, const M: usize, const N: usize>(t: u64, vals: [T; M]) -> [String; N] {
    let mut out: [String; N] = std::array::from_fn(|_| String::new());
    out[0] = t.to_string();
    for (o, v) in out[1..].iter_mut().zip(vals) {
        *o = v.to_string();
    }
    out
}

/// Write `session` under `dir`, creating it. Output depends only on the
/// session contents.
pub fn export_session(session: &Session, dir: &Path, format: ExportFormat) -> Result<SessionMeta, HostError> {
    fs::create_dir_all(dir)?;
    let meta = SessionMeta {
        format: SESSION_FORMAT.to_string(),
        samples: format,
        session_id: session.id.clone(),
        mac: session.mac,
        config: session.config,
        calibration: session.calibration.clone(),
        clock_offset_us: session.clock_offset_us,
        start_us: session.start_us,
        end_us: session.end_us,
        record_count: session.records.len(),
        records_crc: records_crc(&session.records),
        packets_received: session.packets_received,
        annotations: session.annotations.clone(),
        gaps: session.gaps.clone(),
        metrics: session.metrics.clone(),
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| HostError::Malformed(e.to_string()))?;
    fs::write(dir.join(META_FILE), json + "\n")?;

    let recs = &session.records;
    match format {
        ExportFormat::Csv => {
            write_table(dir.join("ppg.csv"), PPG_HEADER, recs.iter().filter_map(|r| Some(row(r.timestamp_us, r.ppg?))))?;
            write_table(dir.join("imu.csv"), IMU_HEADER, recs.iter().filter_map(|r| Some(row(r.timestamp_us, r.imu?))))?;
            write_table(dir.join("temp.csv"), TEMP_HEADER, recs.iter().filter_map(|r| Some(row(r.timestamp_us, r.temp?))))?;
        }
        ExportFormat::Binary => {
            let mut bytes = Vec::with_capacity(recs.len() * crate::proto::RECORD_LEN);
            for r in recs {
                r.encode_into(&mut bytes).map_err(|e| HostError::Malformed(e.to_string()))?;
            }
            fs::write(dir.join(BINARY_FILE), bytes)?;
        }
    }
    Ok(meta)
}

fn load_csv_records(dir: &Path) -> Result<Vec<SampleRecord>, HostError> {
    let mut by_time: BTreeMap<u64, SampleRecord> = BTreeMap::new();
    fn slot(m: &mut BTreeMap<u64, SampleRecord>, t: u64) -> &mut SampleRecord {
        m.entry(t).or_insert_with(|| SampleRecord::empty(t))
    }
    for (t, v) in read_table::<u32, 4>(dir.join("ppg.csv"), PPG_HEADER)? {
        slot(&mut by_time, t).ppg = Some([v[0], v[1], v[2]]);
    }
    for (t, v) in read_table::<i16, 7>(dir.join("imu.csv"), IMU_HEADER)? {
        slot(&mut by_time, t).imu = Some([v[0], v[1], v[2], v[3], v[4], v[5]]);
    }
    for (t, v) in read_table::<i16, 4>(dir.join("temp.csv"), TEMP_HEADER)? {
        slot(&mut by_time, t).temp = Some([v[0], v[1], v[2]]);
    }
    Ok(by_time.into_values().collect())
}

/// Read a directory written by `export_session`. The record checksum in the
/// metadata must match the tables.
pub fn import_session(dir: &Path) -> Result<Session, HostError> {
    let text = fs::read_to_string(dir.join(META_FILE))?;
    let meta: SessionMeta = serde_json::from_str(&text).map_err(|e| HostError::Malformed(e.to_string()))?;
    if meta.format != SESSION_FORMAT {
        return Err(HostError::Malformed(format!("unsupported session format `{}`", meta.format)));
    }
    let records = match meta.samples {
        ExportFormat::Csv => load_csv_records(dir)?,
        ExportFormat::Binary => {
            SampleRecord::parse_all(&fs::read(dir.join(BINARY_FILE))?).map_err(|e| HostError::Malformed(e.to_string()))?
        }
    };
    if records.len() != meta.record_count || records_crc(&records) != meta.records_crc {
        return Err(HostError::Malformed("sample tables do not match session.json".into()));
    }
    let mut s = Session::new(meta.mac, meta.config, meta.start_us);
    s.id = meta.session_id;
    s.calibration = meta.calibration;
    s.clock_offset_us = meta.clock_offset_us;
    s.end_us = meta.end_us;
    s.records = records;
    s.annotations = meta.annotations;
    s.gaps = meta.gaps;
    s.metrics = meta.metrics;
    s.packets_received = meta.packets_received;
    s.ended = true;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hostkit::tests::host;
    use crate::types::Modality;

    fn recorded() -> Session {
        let (mut h, macs) = host(1);
        let mac = macs[0];
        h.connect(mac).unwrap();
        h.calibrate(mac).unwrap();
        let mut s = h.start_session(mac, SensorConfig::reference(), 0).unwrap();
        h.run_session(&mut s, 2_000_000).unwrap();
        h.annotate(&mut s, "walking").unwrap();
        h.run_session(&mut s, 1_000_000).unwrap();
        h.annotate(&mut s, "sitting, \"quietly\"").unwrap();
        h.stop_session(&mut s).unwrap();
        s
    }

    fn same(a: &Session, b: &Session) {
        assert_eq!(a.records, b.records);
        assert_eq!(a.annotations, b.annotations);
        assert_eq!(a.gaps, b.gaps);
        assert_eq!((a.id.as_str(), a.mac, a.config), (b.id.as_str(), b.mac, b.config));
        assert_eq!(a.calibration, b.calibration);
    }

    #[test]
    fn csv_round_trip() {
        let s = recorded();
        let dir = tempfile::tempdir().unwrap();
        export_session(&s, dir.path(), ExportFormat::Csv).unwrap();
        same(&s, &import_session(dir.path()).unwrap());

        let rows = |f: &str| fs::read_to_string(dir.path().join(f)).unwrap().lines().count() - 1;
        assert_eq!(rows("ppg.csv"), s.count(Modality::Ppg));
        assert_eq!(rows("imu.csv"), s.count(Modality::Imu));
        assert_eq!(rows("temp.csv"), s.count(Modality::Temp));
        assert!(!dir.path().join(BINARY_FILE).exists());
    }

    #[test]
    fn binary_round_trip() {
        let s = recorded();
        let dir = tempfile::tempdir().unwrap();
        let meta = export_session(&s, dir.path(), ExportFormat::Binary).unwrap();
        same(&s, &import_session(dir.path()).unwrap());
        let bytes = fs::read(dir.path().join(BINARY_FILE)).unwrap();
        assert_eq!(bytes.len(), s.records.len() * 38);
        assert_eq!(crate::proto::crc32(&bytes), meta.records_crc);
    }

    #[test]
    fn exports_are_reproducible() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        export_session(&recorded(), a.path(), ExportFormat::Csv).unwrap();
        export_session(&recorded(), b.path(), ExportFormat::Csv).unwrap();
        for f in [META_FILE, "ppg.csv", "imu.csv", "temp.csv"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn tampered_tables_are_rejected() {
        let s = recorded();
        let dir = tempfile::tempdir().unwrap();
        export_session(&s, dir.path(), ExportFormat::Csv).unwrap();
        let p = dir.path().join("temp.csv");
        let text = fs::read_to_string(&p).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.remove(3);
        fs::write(&p, lines.join("\n")).unwrap();
        assert!(import_session(dir.path()).unwrap_err().is_integrity());
    }
}
