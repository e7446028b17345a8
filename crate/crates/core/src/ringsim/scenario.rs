//! Ground-truth scripts that drive the synthetic sensors.
//!
//! Text format (one directive or row per line, `#` starts a comment):
//!
//! ```text
//! seed 42
//! noise on            # on | off
//! snr_db 10           # PPG noise level against the pulse; default 30
//! gait_hz 2.0
//! artifact 0.3        # walk artifact amplitude relative to the pulse
//! perfusion 0.02      # pulse amplitude relative to DC
//! trace imu.csv       # scripted IMU rows, path relative to the scenario file
//! # t_s  hr_bpm  motion  ambient_c
//! 0      75      rest    25.0
//! 60     90      walk    25.0
//! ```
//!
//! Rows are piecewise constant from their start time; the first row must
//! start at 0. Times are relative to the start of acquisition.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::MICROS_PER_SEC;

pub const HR_MIN_BPM: f64 = 40.0;
pub const HR_MAX_BPM: f64 = 200.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("trace {path}: {msg}")]
    Trace { path: PathBuf, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Motion {
    Rest,
    Walk,
    /// Replay the scenario's scripted IMU trace.
    Trace,
}

impl FromStr for Motion {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rest" => Ok(Motion::Rest),
            "walk" => Ok(Motion::Walk),
            "trace" => Ok(Motion::Trace),
            _ => Err(format!("unknown motion `{s}`")),
        }
    }
}

impl fmt::Display for Motion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Motion::Rest => "rest",
            Motion::Walk => "walk",
            Motion::Trace => "trace",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub start_us: u64,
    pub hr_bpm: f64,
    pub motion: Motion,
    pub ambient_c: f64,
}

/// One IMU sample of a scripted trace, in g and deg/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t_us: u64,
    pub accel_g: [f64; 3],
    pub gyro_dps: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ImuTrace {
    pub rows: Vec<TraceRow>,
}

impl ImuTrace {
    /// Parse CSV rows `t_us,ax,ay,az,gx,gy,gz`. A header line is allowed.
    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| e.to_string())?;
            if i == 0 && rec.get(0).is_some_and(|f| f.parse::<u64>().is_err()) {
                continue;
            }
            if rec.len() != 7 {
                return Err(format!("row {}: expected 7 fields, got {}", i + 1, rec.len()));
            }
            let t_us = rec[0].parse::<u64>().map_err(|e| format!("row {}: {e}", i + 1))?;
            let mut v = [0.0; 6];
            for (j, slot) in v.iter_mut().enumerate() {
                *slot = rec[j + 1].parse::<f64>().map_err(|e| format!("row {}: {e}", i + 1))?;
            }
            rows.push(TraceRow {
                t_us,
                accel_g: [v[0], v[1], v[2]],
                gyro_dps: [v[3], v[4], v[5]],
            });
        }
        let trace = ImuTrace { rows };
        trace.validate()?;
        Ok(trace)
    }

    fn validate(&self) -> Result<(), String> {
        if self.rows.is_empty() {
            return Err("trace has no rows".into());
        }
        if self.rows.windows(2).any(|w| w[1].t_us <= w[0].t_us) {
            return Err("trace timestamps must strictly increase".into());
        }
        Ok(())
    }

    /// Row held at `t_us`, or `None` once the trace has run out.
    pub fn at(&self, t_us: u64) -> Option<&TraceRow> {
        let last = self.rows.last()?;
        if t_us > last.t_us {
            return None;
        }
        let i = self.rows.partition_point(|r| r.t_us <= t_us);
        Some(&self.rows[i.saturating_sub(1)])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub noise: bool,
    /// PPG SNR in dB against the pulse component; `None` uses the default.
    pub snr_db: Option<f64>,
    pub gait_hz: f64,
    /// Walk artifact amplitude on PPG, as a fraction of the pulse amplitude.
    pub artifact: f64,
    /// Pulse amplitude as a fraction of the LED-driven DC level.
    pub perfusion: f64,
    pub rows: Vec<ScenarioRow>,
    pub trace: Option<ImuTrace>,
    /// Cumulative beats at each row start, for exact phase integration.
    #[serde(skip)]
    beats_at_row: Vec<f64>,
}

pub const DEFAULT_SNR_DB: f64 = 30.0;
pub const DEFAULT_GAIT_HZ: f64 = 2.0;
pub const DEFAULT_ARTIFACT: f64 = 0.3;
pub const DEFAULT_PERFUSION: f64 = 0.02;

impl Scenario {
    /// Single-row scenario.
    pub fn constant(hr_bpm: f64, motion: Motion, ambient_c: f64, seed: u64) -> Self {
        let row = ScenarioRow { start_us: 0, hr_bpm, motion, ambient_c };
        Self::from_rows(vec![row], seed).expect("constant scenario is valid")
    }

    /// Single-row scenario replaying `trace` on the IMU.
    pub fn scripted(trace: ImuTrace, hr_bpm: f64, ambient_c: f64, seed: u64) -> Result<Self, ScenarioError> {
        let mut s = Self::constant(hr_bpm, Motion::Rest, ambient_c, seed);
        s.rows[0].motion = Motion::Trace;
        s.trace = Some(trace);
        s.finalize()?;
        Ok(s)
    }

    /// Resting 75 BPM at 25 C.
    pub fn resting(seed: u64) -> Self {
        Self::constant(75.0, Motion::Rest, 25.0, seed)
    }

    pub fn from_rows(rows: Vec<ScenarioRow>, seed: u64) -> Result<Self, ScenarioError> {
        let mut s = Scenario {
            seed,
            noise: true,
            snr_db: None,
            gait_hz: DEFAULT_GAIT_HZ,
            artifact: DEFAULT_ARTIFACT,
            perfusion: DEFAULT_PERFUSION,
            rows,
            trace: None,
            beats_at_row: Vec::new(),
        };
        s.finalize()?;
        Ok(s)
    }

    pub fn with_noise(mut self, on: bool) -> Self {
        self.noise = on;
        self
    }

    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.snr_db = Some(snr_db);
        self
    }

    pub fn with_trace(mut self, trace: ImuTrace) -> Self {
        self.trace = Some(trace);
        self
    }

    /// Validate and precompute derived tables. Must be called after editing
    /// fields directly.
    pub fn finalize(&mut self) -> Result<(), ScenarioError> {
        let invalid = |m: &str| Err(ScenarioError::Invalid(m.to_string()));
        if self.rows.is_empty() {
            return invalid("no rows");
        }
        if self.rows[0].start_us != 0 {
            return invalid("first row must start at t = 0");
        }
        if self.rows.windows(2).any(|w| w[1].start_us <= w[0].start_us) {
            return invalid("row times must strictly increase");
        }
        for r in &self.rows {
            if !(HR_MIN_BPM..=HR_MAX_BPM).contains(&r.hr_bpm) {
                return Err(ScenarioError::Invalid(format!(
                    "heart rate {} outside [{HR_MIN_BPM}, {HR_MAX_BPM}] BPM",
                    r.hr_bpm
                )));
            }
            if r.motion == Motion::Trace && self.trace.is_none() {
                return invalid("motion `trace` requires a `trace` directive");
            }
        }
        // Negated so NaN is rejected too.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.gait_hz > 0.0) || !(self.perfusion > 0.0) || self.artifact < 0.0 {
            return invalid("gait_hz and perfusion must be positive, artifact non-negative");
        }
        let mut beats = Vec::with_capacity(self.rows.len());
        let mut acc = 0.0;
        for (i, r) in self.rows.iter().enumerate() {
            if i > 0 {
                let prev = &self.rows[i - 1];
                acc += prev.hr_bpm / 60.0 * (r.start_us - prev.start_us) as f64 / 1e6;
            }
            beats.push(acc);
        }
        self.beats_at_row = beats;
        Ok(())
    }

    fn row_index(&self, t_us: u64) -> usize {
        self.rows.partition_point(|r| r.start_us <= t_us) - 1
    }

    pub fn row_at(&self, t_us: u64) -> &ScenarioRow {
        &self.rows[self.row_index(t_us)]
    }

    pub fn hr_at(&self, t_us: u64) -> f64 {
        self.row_at(t_us).hr_bpm
    }

    pub fn motion_at(&self, t_us: u64) -> Motion {
        self.row_at(t_us).motion
    }

    pub fn ambient_at(&self, t_us: u64) -> f64 {
        self.row_at(t_us).ambient_c
    }

    /// Beats elapsed since t = 0 (the integral of HR).
    pub fn beats_at(&self, t_us: u64) -> f64 {
        let i = self.row_index(t_us);
        let r = &self.rows[i];
        self.beats_at_row[i] + r.hr_bpm / 60.0 * (t_us - r.start_us) as f64 / 1e6
    }

    /// Effective PPG SNR, or `None` when noise is off.
    pub fn effective_snr_db(&self) -> Option<f64> {
        self.noise.then(|| self.snr_db.unwrap_or(DEFAULT_SNR_DB))
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        Self::parse_with(text, |p| {
            Err(ScenarioError::Invalid(format!("cannot load trace `{}` without a base path", p.display())))
        })
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse_with(&text, |p| {
            let full = base.join(p);
            let csv = std::fs::read_to_string(&full)
                .map_err(|source| ScenarioError::Io { path: full.clone(), source })?;
            ImuTrace::from_csv(&csv).map_err(|msg| ScenarioError::Trace { path: full, msg })
        })
    }

    fn parse_with(
        text: &str,
        mut load_trace: impl FnMut(&Path) -> Result<ImuTrace, ScenarioError>,
    ) -> Result<Self, ScenarioError> {
        let mut s = Scenario {
            seed: 0,
            noise: true,
            snr_db: None,
            gait_hz: DEFAULT_GAIT_HZ,
            artifact: DEFAULT_ARTIFACT,
            perfusion: DEFAULT_PERFUSION,
            rows: Vec::new(),
            trace: None,
            beats_at_row: Vec::new(),
        };
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |msg: String| ScenarioError::Parse { line, msg };
            let fields: Vec<&str> = content.split_whitespace().collect();
            let num = |i: usize| -> Result<f64, ScenarioError> {
                fields
                    .get(i)
                    .ok_or_else(|| err(format!("missing field {}", i + 1)))?
                    .parse::<f64>()
                    .map_err(|e| err(format!("`{}`: {e}", fields[i])))
            };
            match fields[0] {
                "seed" => {
                    s.seed = fields
                        .get(1)
                        .ok_or_else(|| err("missing seed".into()))?
                        .parse()
                        .map_err(|e| err(format!("seed: {e}")))?
                }
                "noise" => {
                    s.noise = match fields.get(1).copied() {
                        Some("on") => true,
                        Some("off") => false,
                        other => return Err(err(format!("noise expects on|off, got {other:?}"))),
                    }
                }
                "snr_db" => s.snr_db = Some(num(1)?),
                "gait_hz" => s.gait_hz = num(1)?,
                "artifact" => s.artifact = num(1)?,
                "perfusion" => s.perfusion = num(1)?,
                "trace" => {
                    let p = fields.get(1).ok_or_else(|| err("missing trace path".into()))?;
                    s.trace = Some(load_trace(Path::new(p))?);
                }
                _ => {
                    if fields.len() != 4 {
                        return Err(err(format!("expected `t_s hr_bpm motion ambient_c`, got {} fields", fields.len())));
                    }
                    let t_s = num(0)?;
                    if t_s < 0.0 {
                        return Err(err("negative time".into()));
                    }
                    s.rows.push(ScenarioRow {
                        start_us: (t_s * MICROS_PER_SEC as f64).round() as u64,
                        hr_bpm: num(1)?,
                        motion: fields[2].parse().map_err(err)?,
                        ambient_c: num(3)?,
                    });
                }
            }
        }
        s.finalize()?;
        Ok(s)
    }
}
