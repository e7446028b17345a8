//! Synthetic PPG, IMU and temperature models.
//!
//! Every noise draw is keyed by (scenario seed, modality, time), so a value
//! depends only on the scenario and the acquisition-relative instant it was
//! taken at, never on how the simulation was stepped.

use std::f64::consts::TAU;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::scenario::{Motion, Scenario};
use crate::proto::{Presence, SampleRecord, PPG_MAX};
use crate::types::{Modality, SensorConfig};

/// ADC counts with the LEDs off.
pub const PPG_DARK_COUNTS: f64 = 2_000.0;
/// DC counts per LED code for the green, red and IR channels.
pub const PPG_GAIN_PER_CODE: [f64; 3] = [30_000.0, 24_000.0, 36_000.0];
/// Channel used for heart-rate estimation.
pub const PPG_IR_CHANNEL: usize = 2;

pub const ACCEL_LSB_PER_G: f64 = 32_768.0 / 16.0;
pub const GYRO_LSB_PER_DPS: f64 = 32_768.0 / 4_000.0;
pub const ACCEL_NOISE_G: f64 = 0.01;
pub const GYRO_NOISE_DPS: f64 = 0.5;

pub const SKIN_TEMP_C: f64 = 33.0;
pub const SKIN_TAU_S: f64 = 600.0;
/// Fixed offset of the second inner thermistor against the first.
pub const INNER_SPREAD_C: f64 = 0.05;
pub const TEMP_NOISE_C: f64 = 0.05;
/// Thermistor accuracy; noise draws are clipped to it.
pub const TEMP_ACCURACY_C: f64 = 0.1;

/// Upper bound of per-modality acquisition jitter.
pub const JITTER_MAX_US: u64 = 8;

/// Walk accelerometer amplitudes (g) and phases per axis.
const WALK_ACCEL: [(f64, f64); 3] = [(0.15, 0.0), (0.05, 1.0), (0.30, 0.3)];
/// Walk gyroscope amplitudes (dps) and phases per axis.
const WALK_GYRO: [(f64, f64); 3] = [(30.0, 1.571), (15.0, 2.2), (10.0, 0.0)];

const STREAM_JITTER: u64 = 3;

/// Systolic peak plus a dicrotic shoulder over one beat, phase in [0, 1).
pub fn pulse_template(phase: f64) -> f64 {
    fn bump(phase: f64, centre: f64, width: f64) -> f64 {
        let d = (phase - centre).abs();
        let d = d.min(1.0 - d);
        (-0.5 * (d / width).powi(2)).exp()
    }
    bump(phase, 0.15, 0.06) + 0.3 * bump(phase, 0.30, 0.09)
}

/// Standard deviation of the template over one beat.
fn template_rms() -> f64 {
    const N: usize = 4096;
    let v: Vec<f64> = (0..N).map(|i| pulse_template(i as f64 / N as f64)).collect();
    let mean = v.iter().sum::<f64>() / N as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / N as f64).sqrt()
}

/// Set when a scripted IMU trace has no row for the requested instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceExhausted;

/// One acquisition: the record plus the instant each modality was actually
/// read (equal to the record timestamp when jitter is off).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sampled {
    pub record: SampleRecord,
    pub acquired_at_us: [Option<u64>; 3],
}

/// Sensor front-end bound to one scenario.
#[derive(Debug, Clone)]
pub struct Sensors {
    scenario: Scenario,
    template_rms: f64,
    rng: ChaCha8Rng,
}

impl Sensors {
    pub fn new(scenario: Scenario) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        Sensors { scenario, template_rms: template_rms(), rng }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    fn rng_at(&mut self, stream: u64, t_us: u64) -> &mut ChaCha8Rng {
        self.rng.set_stream(stream);
        // 64 words per instant leaves room for every draw of one sample.
        self.rng.set_word_pos(u128::from(t_us) * 64);
        &mut self.rng
    }

    fn normal(rng: &mut ChaCha8Rng) -> f64 {
        rng.sample(StandardNormal)
    }

    /// Three PPG channels at scenario time `t_us`.
    pub fn ppg(&mut self, t_us: u64, led_codes: [u8; 3]) -> [u32; 3] {
        let scn = &self.scenario;
        let phase = scn.beats_at(t_us).fract();
        let pulse = pulse_template(phase);
        let t_s = t_us as f64 / 1e6;
        let artifact = match scn.motion_at(t_us) {
            Motion::Walk => scn.artifact * (TAU * scn.gait_hz * t_s).sin(),
            _ => 0.0,
        };
        let noise_rel = scn
            .effective_snr_db()
            .map(|snr| self.template_rms / 10f64.powf(snr / 20.0));
        let perfusion = scn.perfusion;
        let rng = self.rng_at(Modality::Ppg as u64, t_us);
        let mut out = [0u32; 3];
        for ch in 0..3 {
            let drive = PPG_GAIN_PER_CODE[ch] * f64::from(led_codes[ch]);
            let ac = perfusion * drive;
            let noise = noise_rel.map_or(0.0, |r| r * ac * Self::normal(rng));
            let v = PPG_DARK_COUNTS + drive + ac * (pulse + artifact) + noise;
            out[ch] = v.round().clamp(0.0, f64::from(PPG_MAX)) as u32;
        }
        out
    }

    /// Accelerometer (g) and gyroscope (dps) at scenario time `t_us`, before
    /// quantization.
    pub fn imu_physical(&mut self, t_us: u64) -> Result<([f64; 3], [f64; 3]), TraceExhausted> {
        let scn = &self.scenario;
        let t_s = t_us as f64 / 1e6;
        let (mut accel, mut gyro) = match scn.motion_at(t_us) {
            Motion::Rest => ([0.0, 0.0, 1.0], [0.0; 3]),
            Motion::Walk => {
                let w = TAU * scn.gait_hz * t_s;
                let mut a = [0.0, 0.0, 1.0];
                let mut g = [0.0; 3];
                for i in 0..3 {
                    a[i] += WALK_ACCEL[i].0 * (w + WALK_ACCEL[i].1).sin();
                    g[i] = WALK_GYRO[i].0 * (w + WALK_GYRO[i].1).sin();
                }
                (a, g)
            }
            Motion::Trace => {
                let trace = scn.trace.as_ref().ok_or(TraceExhausted)?;
                let row = trace.at(t_us).ok_or(TraceExhausted)?;
                // Scripted rows are replayed verbatim.
                return Ok((row.accel_g, row.gyro_dps));
            }
        };
        if scn.noise {
            let rng = self.rng_at(Modality::Imu as u64, t_us);
            for a in &mut accel {
                *a += ACCEL_NOISE_G * Self::normal(rng);
            }
            for g in &mut gyro {
                *g += GYRO_NOISE_DPS * Self::normal(rng);
            }
        }
        Ok((accel, gyro))
    }

    pub fn imu(&mut self, t_us: u64) -> Result<[i16; 6], TraceExhausted> {
        let (a, g) = self.imu_physical(t_us)?;
        let q = |v: f64, scale: f64| (v * scale).round().clamp(-32768.0, 32767.0) as i16;
        Ok([
            q(a[0], ACCEL_LSB_PER_G),
            q(a[1], ACCEL_LSB_PER_G),
            q(a[2], ACCEL_LSB_PER_G),
            q(g[0], GYRO_LSB_PER_DPS),
            q(g[1], GYRO_LSB_PER_DPS),
            q(g[2], GYRO_LSB_PER_DPS),
        ])
    }

    /// Two inner points and the outer point, in degrees C, before quantization.
    pub fn temp_physical(&mut self, t_us: u64) -> [f64; 3] {
        let scn = &self.scenario;
        let start = scn.ambient_at(0);
        let decay = (-(t_us as f64 / 1e6) / SKIN_TAU_S).exp();
        let inner = SKIN_TEMP_C + (start - SKIN_TEMP_C) * decay;
        let mut v = [inner, inner - INNER_SPREAD_C, scn.ambient_at(t_us)];
        if scn.noise {
            let rng = self.rng_at(Modality::Temp as u64, t_us);
            for x in &mut v {
                *x += (TEMP_NOISE_C * Self::normal(rng)).clamp(-TEMP_ACCURACY_C, TEMP_ACCURACY_C);
            }
        }
        v
    }

    /// Centi-degrees C.
    pub fn temp(&mut self, t_us: u64) -> [i16; 3] {
        self.temp_physical(t_us).map(|c| (c * 100.0).round() as i16)
    }

    fn jitter(&mut self, t_us: u64) -> [u64; 3] {
        let rng = self.rng_at(STREAM_JITTER, t_us);
        let mut j = [0; 3];
        for x in &mut j {
            *x = rng.next_u64() % (JITTER_MAX_US + 1);
        }
        j
    }
}

/// Read every modality in `due` at scenario time `rel_us` into one record
/// stamped `timestamp_us`. With `jitter` on, each modality's acquisition
/// instant is offset by an independent draw from [0, 8] us.
///
/// IMU is dropped from the record when its trace is exhausted; the second
/// return value reports that.
pub fn sample_all(
    sensors: &mut Sensors,
    config: &SensorConfig,
    due: Presence,
    rel_us: u64,
    timestamp_us: u64,
    jitter: bool,
) -> (Sampled, Option<TraceExhausted>) {
    let offsets = if jitter { sensors.jitter(rel_us) } else { [0; 3] };
    let mut record = SampleRecord::empty(timestamp_us);
    let mut acquired_at_us = [None; 3];
    let mut exhausted = None;
    if due.contains(Modality::Ppg) {
        let o = offsets[Modality::Ppg as usize];
        record.ppg = Some(sensors.ppg(rel_us + o, config.ppg.led_codes));
        acquired_at_us[Modality::Ppg as usize] = Some(timestamp_us + o);
    }
    if due.contains(Modality::Imu) {
        let o = offsets[Modality::Imu as usize];
        match sensors.imu(rel_us + o) {
            Ok(v) => {
                record.imu = Some(v);
                acquired_at_us[Modality::Imu as usize] = Some(timestamp_us + o);
            }
            Err(e) => exhausted = Some(e),
        }
    }
    if due.contains(Modality::Temp) {
        let o = offsets[Modality::Temp as usize];
        record.temp = Some(sensors.temp(rel_us + o));
        acquired_at_us[Modality::Temp as usize] = Some(timestamp_us + o);
    }
    (Sampled { record, acquired_at_us }, exhausted)
}
