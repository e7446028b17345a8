use serde::{Deserialize, Serialize};

use super::battery::{current_na, BatteryState};
use super::flash::{FlashStore, FLASH_CAPACITY};
use super::rtc::RtcState;
use super::scenario::Scenario;
use super::sensors::{sample_all, Sensors};
use super::RingError;
use crate::proto::{
    pack_samples, Chunk, Command, DeviceEvent, FileListPage, Message, Presence, Response,
    SampleRecord, StatusReport, TargetMode, CHUNK_DATA_MAX, FILE_LIST_PAGE, WINDOW_US,
};
use crate::types::{EpochTime, Mac, Modality, RingMode, SensorConfig, MICROS_PER_SEC, TICK_US};

pub const FW_VERSION: &str = "1.4.2";
pub const TICKS_PER_WINDOW: u64 = WINDOW_US / TICK_US;

/// A single scheduled offline recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OfflinePlan {
    pub start_delay_s: u32,
    pub total_s: u32,
    pub segment_s: u32,
    /// Virtual instant logging begins.
    pub start_at_us: u64,
}

impl OfflinePlan {
    pub fn segment_count(&self) -> u32 {
        self.total_s.div_ceil(self.segment_s)
    }
}

/// Something the ring sent unprompted at virtual instant `at_us`: a stream
/// packet or a device event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Emission {
    pub at_us: u64,
    pub message: Message,
}

#[derive(Debug, Clone)]
enum Sink {
    Stream { buf: Vec<SampleRecord>, end_tick: Option<u64> },
    Log { total_ticks: u64, segment_ticks: u64, segments: u16 },
}

/// A running acquisition. Tick `k` fires at `start_us + k * TICK_US` and is
/// stamped `device_start_us + k * TICK_US`.
#[derive(Debug, Clone)]
struct Acquisition {
    start_us: u64,
    device_start_us: u64,
    next_tick: u64,
    imu_exhausted: bool,
    sink: Sink,
}

impl Acquisition {
    fn next_at(&self) -> u64 {
        self.start_us + self.next_tick * TICK_US
    }
}

/// Whether `cmd` is accepted in `mode`. While an offline plan is armed or
/// running the radio sleeps and every command is refused.
pub fn transition_allowed(mode: RingMode, cmd: &Command) -> bool {
    use RingMode::*;
    match cmd {
        Command::SetMode { mode: TargetMode::Idle, .. } => matches!(mode, Idle | Streaming | Downloading),
        Command::SetMode { mode: TargetMode::Streaming, .. } => matches!(mode, Idle | Streaming),
        Command::SensorEnable { .. }
        | Command::SetRate { .. }
        | Command::SetLed { .. }
        | Command::CalibTrim { .. }
        | Command::ScheduleOffline { .. } => mode == Idle,
        Command::CalibProbe { .. } | Command::GetStatus | Command::GetFileList { .. } => {
            matches!(mode, Idle | Streaming | Downloading)
        }
        Command::OpenFile { .. } => matches!(mode, Idle | Downloading),
        Command::ReadChunk { .. } | Command::CloseFile { .. } => mode == Downloading,
    }
}

#[derive(Debug, Clone)]
pub struct Ring {
    name: String,
    mac: Mac,
    now_us: u64,
    mode: RingMode,
    config: SensorConfig,
    rtc: RtcState,
    battery: BatteryState,
    flash: FlashStore,
    plan: Option<OfflinePlan>,
    seq: u32,
    sensors: Sensors,
    jitter: bool,
    fault_flags: u8,
    powered: bool,
    acq: Option<Acquisition>,
    open_file: Option<u16>,
    outbox: Vec<Emission>,
}

impl Ring {
    pub fn new(mac: Mac, scenario: Scenario) -> Self {
        Ring {
            name: format!("tau-{:02X}{:02X}", mac.0[4], mac.0[5]),
            mac,
            now_us: 0,
            mode: RingMode::Idle,
            config: SensorConfig::reference(),
            rtc: RtcState::default(),
            battery: BatteryState::full(),
            flash: FlashStore::with_capacity(FLASH_CAPACITY),
            plan: None,
            seq: 0,
            sensors: Sensors::new(scenario),
            jitter: false,
            fault_flags: 0,
            powered: true,
            acq: None,
            open_file: None,
            outbox: Vec::new(),
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_rtc(mut self, rtc: RtcState) -> Self {
        self.rtc = rtc;
        self
    }

    pub fn with_battery(mut self, battery: BatteryState) -> Self {
        self.powered = !battery.is_empty();
        self.battery = battery;
        self
    }

    pub fn with_jitter(mut self, on: bool) -> Self {
        self.jitter = on;
        self
    }

    pub fn with_flash(mut self, flash: FlashStore) -> Self {
        self.flash = flash;
        self
    }

    /// Start the ring's clock at `t_us` instead of zero.
    pub fn starting_at(mut self, t_us: u64) -> Self {
        self.now_us = t_us;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn mac(&self) -> Mac {
        self.mac
    }
    pub fn now_us(&self) -> u64 {
        self.now_us
    }
    pub fn mode(&self) -> RingMode {
        self.mode
    }
    pub fn config(&self) -> &SensorConfig {
        &self.config
    }
    pub fn rtc(&self) -> &RtcState {
        &self.rtc
    }
    pub fn battery(&self) -> &BatteryState {
        &self.battery
    }
    pub fn battery_mut(&mut self) -> &mut BatteryState {
        &mut self.battery
    }
    pub fn flash(&self) -> &FlashStore {
        &self.flash
    }
    pub fn plan(&self) -> Option<&OfflinePlan> {
        self.plan.as_ref()
    }
    pub fn seq(&self) -> u32 {
        self.seq
    }
    pub fn scenario(&self) -> &Scenario {
        self.sensors.scenario()
    }
    pub fn is_powered(&self) -> bool {
        self.powered
    }
    pub fn fault_flags(&self) -> u8 {
        self.fault_flags
    }

    pub fn set_fault(&mut self, m: Modality, on: bool) {
        if on {
            self.fault_flags |= m.presence_bit();
        } else {
            self.fault_flags &= !m.presence_bit();
        }
    }

    /// Device clock reading now, in epoch microseconds.
    pub fn device_time_us(&self) -> u64 {
        self.rtc.read(self.now_us)
    }

    /// Virtual instant the current acquisition started, if one is running.
    pub fn acquisition_start_us(&self) -> Option<u64> {
        self.acq.as_ref().map(|a| a.start_us)
    }

    pub fn status(&self) -> StatusReport {
        StatusReport {
            mode: self.mode,
            config: self.config,
            battery_pct: self.battery.percent(),
            flash_used: self.flash.used() as u32,
            flash_capacity: self.flash.capacity() as u32,
            file_count: self.flash.entries().len() as u16,
            fault_flags: self.fault_flags,
            fw_version: FW_VERSION.to_string(),
        }
    }

    pub fn take_emissions(&mut self) -> Vec<Emission> {
        std::mem::take(&mut self.outbox)
    }

    fn emit(&mut self, message: Message) {
        self.outbox.push(Emission { at_us: self.now_us, message });
    }

    /// Execute one command at the current instant. Errors map to
    /// `Response::Error` on the wire, see [`Ring::handle`].
    pub fn apply_command(&mut self, cmd: &Command) -> Result<Message, RingError> {
        if !self.powered {
            return Err(RingError::PoweredOff);
        }
        if !transition_allowed(self.mode, cmd) {
            return Err(RingError::InvalidTransition { mode: self.mode, opcode: cmd.opcode() });
        }
        let ack = Ok(Message::Response(Response::Ack));
        match *cmd {
            Command::SetMode { mode: TargetMode::Streaming, duration_ms } => {
                if self.mode == RingMode::Streaming {
                    return ack;
                }
                if !(duration_ms as u64 * 1000).is_multiple_of(WINDOW_US) {
                    return Err(RingError::BadArgument("duration must be a whole number of 50 ms windows"));
                }
                let end_tick = (duration_ms > 0).then(|| duration_ms as u64 * 1000 / TICK_US);
                self.seq = 0;
                self.start_acquisition(Sink::Stream { buf: Vec::new(), end_tick });
                self.mode = RingMode::Streaming;
                ack
            }
            Command::SetMode { mode: TargetMode::Idle, .. } => {
                match self.mode {
                    RingMode::Streaming => self.end_stream(true),
                    RingMode::Downloading => self.open_file = None,
                    _ => {}
                }
                self.mode = RingMode::Idle;
                ack
            }
            Command::SensorEnable { modality, enabled } => {
                self.config.set_enabled(modality, enabled);
                ack
            }
            Command::SetRate { modality, rate_hz } => {
                if !modality.allowed_rates().contains(&rate_hz) {
                    return Err(RingError::BadArgument("rate not in the allowed set"));
                }
                self.config.set_rate(modality, rate_hz);
                ack
            }
            Command::SetLed { led_codes, pulse_width_us } => {
                if pulse_width_us == 0 {
                    return Err(RingError::BadArgument("pulse width must be positive"));
                }
                self.config.ppg.led_codes = led_codes;
                self.config.ppg.pulse_width_us = pulse_width_us;
                ack
            }
            Command::CalibProbe { .. } => Ok(Message::Response(Response::CalibReading {
                device_time: EpochTime::from_micros(self.rtc.read(self.now_us)),
            })),
            Command::CalibTrim { epoch } => {
                self.rtc.trim(self.now_us, epoch.as_micros());
                ack
            }
            Command::ScheduleOffline { start_delay_s, total_s, segment_s } => {
                if total_s == 0 || segment_s == 0 || segment_s > total_s {
                    return Err(RingError::BadArgument("need 0 < segment <= total"));
                }
                self.plan = Some(OfflinePlan {
                    start_delay_s,
                    total_s,
                    segment_s,
                    start_at_us: self.now_us + u64::from(start_delay_s) * MICROS_PER_SEC,
                });
                self.mode = RingMode::OfflineArmed;
                ack
            }
            Command::GetStatus => Ok(Message::Response(Response::Status(self.status()))),
            Command::GetFileList { start_index } => {
                let entries = self.flash.entries();
                let start = (start_index as usize).min(entries.len());
                let end = (start + FILE_LIST_PAGE).min(entries.len());
                Ok(Message::FileList(FileListPage {
                    total: entries.len() as u16,
                    start_index,
                    entries: entries[start..end].to_vec(),
                }))
            }
            Command::OpenFile { file_id } => {
                let seg = self.flash.segment(file_id).ok_or(RingError::NoSuchFile(file_id))?;
                let entry = seg.entry;
                self.open_file = Some(file_id);
                self.mode = RingMode::Downloading;
                Ok(Message::Response(Response::FileOpened(entry)))
            }
            Command::ReadChunk { file_id, offset, max_len } => {
                if self.open_file != Some(file_id) {
                    return Err(RingError::BadArgument("file is not open"));
                }
                let seg = self.flash.segment(file_id).ok_or(RingError::NoSuchFile(file_id))?;
                if offset as usize > seg.payload.len() {
                    return Err(RingError::BadArgument("offset beyond end of file"));
                }
                let n = (max_len as usize).min(CHUNK_DATA_MAX);
                let data = self.flash.read(file_id, offset as usize, n).unwrap_or_default().to_vec();
                Ok(Message::Chunk(Chunk { file_id, offset, data }))
            }
            Command::CloseFile { file_id } => {
                if self.open_file != Some(file_id) {
                    return Err(RingError::BadArgument("file is not open"));
                }
                self.open_file = None;
                self.mode = RingMode::Idle;
                ack
            }
        }
    }

    /// Like [`Ring::apply_command`] but folds errors into the response the
    /// firmware would send. `None` when the ring is powered off.
    pub fn handle(&mut self, cmd: &Command) -> Option<Message> {
        match self.apply_command(cmd) {
            Ok(m) => Some(m),
            Err(e) => e.code().map(|c| Message::Response(Response::Error(c))),
        }
    }

    fn start_acquisition(&mut self, sink: Sink) {
        self.acq = Some(Acquisition {
            start_us: self.now_us,
            device_start_us: self.rtc.read(self.now_us),
            next_tick: 0,
            imu_exhausted: false,
            sink,
        });
    }

    /// Run the scheduler over `[now, now + dt_us)`.
    pub fn advance(&mut self, dt_us: u64) {
        self.advance_to(self.now_us + dt_us);
    }

    /// Run the scheduler over `[now, target_us)`. Events due exactly at
    /// `target_us` fire on a later call, so any partition of an interval
    /// yields the same emissions.
    pub fn advance_to(&mut self, target_us: u64) {
        assert!(target_us >= self.now_us, "virtual time cannot run backwards");
        while self.now_us < target_us {
            if !self.powered {
                self.now_us = target_us;
                break;
            }
            if self.battery.is_empty() {
                self.power_off();
                continue;
            }
            let next = self.next_event_us();
            let until = next.map_or(target_us, |e| e.min(target_us));
            let draw = current_na(self.mode, &self.config);
            if let Some(off) = self.battery.step(draw, until - self.now_us) {
                self.now_us += off;
                self.power_off();
                continue;
            }
            self.now_us = until;
            if next == Some(until) && until < target_us {
                self.fire();
            }
        }
    }

    fn next_event_us(&self) -> Option<u64> {
        match self.mode {
            RingMode::OfflineArmed => self.plan.map(|p| p.start_at_us),
            RingMode::Streaming | RingMode::Logging => self.acq.as_ref().map(Acquisition::next_at),
            RingMode::Idle | RingMode::Downloading => None,
        }
    }

    fn fire(&mut self) {
        match self.mode {
            RingMode::OfflineArmed => {
                let plan = self.plan.expect("armed ring has a plan");
                let total_ticks = u64::from(plan.total_s) * MICROS_PER_SEC / TICK_US;
                let segment_ticks = u64::from(plan.segment_s) * MICROS_PER_SEC / TICK_US;
                self.start_acquisition(Sink::Log { total_ticks, segment_ticks, segments: 0 });
                self.mode = RingMode::Logging;
            }
            RingMode::Streaming | RingMode::Logging => self.tick(),
            _ => {}
        }
    }

    fn tick(&mut self) {
        let config = self.config;
        let jitter = self.jitter;
        let acq = self.acq.as_mut().expect("ticking without an acquisition");
        let k = acq.next_tick;
        acq.next_tick += 1;
        let rel_us = k * TICK_US;
        let timestamp_us = acq.device_start_us + rel_us;

        let mut due = Presence::default();
        for m in Modality::ALL {
            let skip = m == Modality::Imu && acq.imu_exhausted;
            if config.enabled(m) && k.is_multiple_of(config.tick_divisor(m)) && !skip {
                due = due.with(m);
            }
        }
        let mut record = None;
        let mut exhausted = false;
        if due != Presence::default() {
            let (s, ex) = sample_all(&mut self.sensors, &config, due, rel_us, timestamp_us, jitter);
            exhausted = ex.is_some();
            if s.record.presence() != Presence::default() {
                record = Some(s.record);
            }
        }
        if exhausted {
            acq.imu_exhausted = true;
            self.emit(Message::Event(DeviceEvent::TraceExhausted));
        }
        match self.mode {
            RingMode::Streaming => self.stream_tick(k, record),
            RingMode::Logging => self.log_tick(k, record),
            _ => unreachable!("ticks only run while acquiring"),
        }
    }

    fn stream_tick(&mut self, k: u64, record: Option<SampleRecord>) {
        let acq = self.acq.as_mut().expect("streaming acquisition");
        let Sink::Stream { buf, end_tick } = &mut acq.sink else { unreachable!() };
        buf.extend(record);
        let end_tick = *end_tick;
        if (k + 1).is_multiple_of(TICKS_PER_WINDOW) {
            self.emit_packet(k / TICKS_PER_WINDOW);
        }
        if end_tick == Some(k + 1) {
            self.end_stream(false);
            self.mode = RingMode::Idle;
        }
    }

    fn emit_packet(&mut self, window: u64) {
        let acq = self.acq.as_mut().expect("streaming acquisition");
        let Sink::Stream { buf, .. } = &mut acq.sink else { unreachable!() };
        let records = std::mem::take(buf);
        let base = acq.device_start_us + window * WINDOW_US;
        let packet = pack_samples(records, self.seq, base).expect("scheduler keeps records inside their window");
        self.seq += 1;
        self.emit(Message::Stream(packet));
    }

    /// Stop streaming. A stop mid-window flushes the partial window.
    fn end_stream(&mut self, flush: bool) {
        if let Some(acq) = &self.acq {
            let in_window = acq.next_tick % TICKS_PER_WINDOW;
            if flush && in_window != 0 {
                self.emit_packet(acq.next_tick / TICKS_PER_WINDOW);
            }
        }
        self.acq = None;
        let packets = self.seq;
        self.emit(Message::Event(DeviceEvent::SessionEnded { packets }));
    }

    fn log_tick(&mut self, k: u64, record: Option<SampleRecord>) {
        let (total_ticks, segment_ticks) = match &self.acq.as_ref().expect("logging acquisition").sink {
            Sink::Log { total_ticks, segment_ticks, .. } => (*total_ticks, *segment_ticks),
            Sink::Stream { .. } => unreachable!(),
        };
        if let Some(r) = record {
            let bytes = r.to_bytes().expect("device timestamps fit 56 bits");
            let mut ok = true;
            if !self.flash.is_open() {
                ok = self.flash.open_segment((r.timestamp_us / MICROS_PER_SEC) as u32).is_ok();
            }
            if !ok || self.flash.append(&bytes).is_err() {
                self.close_log_segment();
                self.emit(Message::Event(DeviceEvent::FlashFull));
                self.finish_logging(false);
                return;
            }
        }
        if (k + 1).is_multiple_of(segment_ticks) || k + 1 == total_ticks {
            self.close_log_segment();
        }
        if k + 1 == total_ticks {
            self.finish_logging(true);
        }
    }

    fn close_log_segment(&mut self) {
        if !self.flash.is_open() {
            return;
        }
        if let Ok(Some(entry)) = self.flash.close_segment() {
            if let Some(Acquisition { sink: Sink::Log { segments, .. }, .. }) = &mut self.acq {
                *segments += 1;
            }
            self.emit(Message::Event(DeviceEvent::SegmentClosed(entry)));
        }
    }

    fn finish_logging(&mut self, completed: bool) {
        if completed {
            if let Some(Acquisition { sink: Sink::Log { segments, .. }, .. }) = &self.acq {
                let segments = *segments;
                self.emit(Message::Event(DeviceEvent::LoggingComplete { segments }));
            }
        }
        self.acq = None;
        self.plan = None;
        self.mode = RingMode::Idle;
    }

    fn power_off(&mut self) {
        if self.mode == RingMode::Logging {
            self.close_log_segment();
        }
        self.acq = None;
        self.plan = None;
        self.open_file = None;
        self.mode = RingMode::Idle;
        self.powered = false;
        self.emit(Message::Event(DeviceEvent::BatteryEmpty));
    }
}
