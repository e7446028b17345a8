use serde::{Deserialize, Serialize};

use super::{Host, HostError, Session};
use crate::proto::{crc32, Command, Crc32, Message, Response, SampleRecord, CHUNK_DATA_MAX, RECORD_LEN};
use crate::transport::{LinkError, LinkState};
use crate::types::{LogFileEntry, Mac, Modality, SensorConfig, MICROS_PER_SEC};

/// Bytes received before a transfer was cut, enough to resume it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialDownload {
    pub entry: LogFileEntry,
    pub bytes: Vec<u8>,
}

/// Bytes received so far, reported after every chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferProgress {
    pub file_id: u16,
    pub bytes: u32,
    pub total: u32,
    /// Host virtual time.
    pub now_us: u64,
}

/// A downloaded segment whose checksum matched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchedFile {
    pub entry: LogFileEntry,
    pub payload: Vec<u8>,
    pub records: Vec<SampleRecord>,
}

/// What the host knows about a plan it armed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OfflineSchedule {
    /// Host virtual time when the ring acknowledged the plan.
    pub armed_at_us: u64,
    pub start_delay_s: u32,
    pub total_s: u32,
    pub segment_s: u32,
    pub config: SensorConfig,
    pub flash_used_before: u32,
    pub flash_capacity: u32,
}

impl OfflineSchedule {
    pub fn segments(&self) -> u32 {
        self.total_s.div_ceil(self.segment_s)
    }

    fn start_us(&self) -> u64 {
        self.armed_at_us + u64::from(self.start_delay_s) * MICROS_PER_SEC
    }

    fn end_us(&self) -> u64 {
        self.start_us() + u64::from(self.total_s) * MICROS_PER_SEC
    }

    /// Records written per second: one per scheduler tick with any sensor
    /// due, i.e. the fastest enabled rate.
    fn records_per_s(&self) -> u32 {
        Modality::ALL
            .iter()
            .filter(|&&m| self.config.enabled(m))
            .map(|&m| u32::from(self.config.rate(m)))
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OfflinePhase {
    Armed,
    Logging,
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfflineStatus {
    pub phase: OfflinePhase,
    pub schedule: OfflineSchedule,
    /// Seconds of the plan that have run.
    pub elapsed_s: f64,
    pub progress: f64,
    /// Occupancy implied by the plan; the ring cannot be asked while asleep.
    pub estimated_flash_used: u64,
}

impl Host {
    /// Arm an offline recording. The ring stops answering until it is done.
    pub fn configure_offline(
        &mut self,
        mac: Mac,
        start_delay_s: u32,
        total_s: u32,
        segment_s: u32,
    ) -> Result<u32, HostError> {
        if total_s == 0 || segment_s == 0 || segment_s > total_s {
            return Err(HostError::BadArgument("need 0 < segment <= total".into()));
        }
        let status = self.status(mac)?;
        let ex = self.expect_ack(mac, &Command::ScheduleOffline { start_delay_s, total_s, segment_s })?;
        let schedule = OfflineSchedule {
            armed_at_us: ex.received_us - (ex.received_us - ex.attempt_sent_us) / 2,
            start_delay_s,
            total_s,
            segment_s,
            config: status.config,
            flash_used_before: status.flash_used,
            flash_capacity: status.flash_capacity,
        };
        self.offline.insert(mac, schedule);
        Ok(schedule.segments())
    }

    /// Progress of the last plan armed on `mac`, from host time alone.
    pub fn offline_status(&self, mac: Mac) -> Option<OfflineStatus> {
        let schedule = *self.offline.get(&mac)?;
        let now = self.radio.now_us();
        let total_us = u64::from(schedule.total_s) * MICROS_PER_SEC;
        let ran_us = now.saturating_sub(schedule.start_us()).min(total_us);
        let phase = if now < schedule.start_us() {
            OfflinePhase::Armed
        } else if now < schedule.end_us() {
            OfflinePhase::Logging
        } else {
            OfflinePhase::Complete
        };
        let bytes = ran_us * u64::from(schedule.records_per_s()) / MICROS_PER_SEC * RECORD_LEN as u64;
        Some(OfflineStatus {
            phase,
            schedule,
            elapsed_s: ran_us as f64 / 1e6,
            progress: ran_us as f64 / total_us as f64,
            estimated_flash_used: (u64::from(schedule.flash_used_before) + bytes)
                .min(u64::from(schedule.flash_capacity)),
        })
    }

    /// Every file on the ring, oldest first.
    pub fn list_files(&mut self, mac: Mac) -> Result<Vec<LogFileEntry>, HostError> {
        let mut out: Vec<LogFileEntry> = Vec::new();
        loop {
            let start_index = out.len() as u16;
            let page = match self.command(mac, &Command::GetFileList { start_index })?.reply {
                Message::FileList(p) => p,
                _ => return Err(HostError::UnexpectedReply("GetFileList")),
            };
            let done = page.entries.is_empty() || out.len() + page.entries.len() >= page.total as usize;
            out.extend(page.entries);
            if done {
                break;
            }
        }
        out.sort_by_key(|e| (e.start_time, e.file_id));
        Ok(out)
    }

    /// Download a file over the bulk channel and check its CRC. If the link
    /// drops, the bytes so far come back in `HostError::Interrupted`; pass
    /// them as `resume` to continue from where the transfer stopped.
    pub fn fetch_file(
        &mut self,
        mac: Mac,
        file_id: u16,
        resume: Option<PartialDownload>,
        mut progress: impl FnMut(TransferProgress),
    ) -> Result<FetchedFile, HostError> {
        if self.radio.link_state(mac) == Some(LinkState::Disconnected) {
            self.connect(mac)?;
        }
        let entry = match self.command(mac, &Command::OpenFile { file_id })?.reply {
            Message::Response(Response::FileOpened(e)) => e,
            _ => return Err(HostError::UnexpectedReply("OpenFile")),
        };
        let mut bytes = match resume {
            Some(p) if p.entry == entry && p.bytes.len() <= entry.size as usize => p.bytes,
            Some(_) => return Err(HostError::BadArgument("resume data belongs to a different file".into())),
            None => Vec::new(),
        };
        bytes.reserve(entry.size as usize - bytes.len());
        while bytes.len() < entry.size as usize {
            let offset = bytes.len() as u32;
            match self.radio.bulk_read(mac, file_id, offset, CHUNK_DATA_MAX as u16) {
                Ok(c) if c.offset == offset && !c.data.is_empty() => bytes.extend_from_slice(&c.data),
                Ok(_) => return Err(HostError::Malformed(format!("file {file_id}: chunk out of sequence"))),
                Err(LinkError::Disconnected { .. }) => {
                    return Err(HostError::Interrupted {
                        file_id,
                        partial: Box::new(PartialDownload { entry, bytes }),
                    })
                }
                Err(e) => return Err(e.into()),
            }
            progress(TransferProgress { file_id, bytes: bytes.len() as u32, total: entry.size, now_us: self.radio.now_us() });
        }
        self.expect_ack(mac, &Command::CloseFile { file_id })?;

        let actual = crc32(&bytes);
        if actual != entry.crc {
            return Err(HostError::CrcMismatch { file_id, expected: entry.crc, actual });
        }
        let records = SampleRecord::parse_all(&bytes).map_err(|e| HostError::Malformed(e.to_string()))?;
        Ok(FetchedFile { entry, payload: bytes, records })
    }
}

impl Session {
    /// A session holding the records of downloaded offline segments.
    pub fn from_files(mac: Mac, config: SensorConfig, files: &[FetchedFile]) -> Self {
        let mut files: Vec<&FetchedFile> = files.iter().collect();
        files.sort_by_key(|f| (f.entry.start_time, f.entry.file_id));
        let start = files.first().and_then(|f| f.records.first()).map_or(0, |r| r.timestamp_us);
        let mut s = Session::new(mac, config, start);
        s.records = files.iter().flat_map(|f| f.records.iter().copied()).collect();
        s.end_us = s.records.last().map(|r| r.timestamp_us);
        s.ended = true;
        s
    }
}

/// CRC of the concatenated 38-byte encoding of `records`.
pub(crate) fn records_crc(records: &[SampleRecord]) -> u32 {
    let mut c = Crc32::new();
    for r in records {
        c.update(&r.to_bytes().expect("stored records encode"));
    }
    c.finish()
}
