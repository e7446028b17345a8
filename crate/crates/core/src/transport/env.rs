use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{FaultProfile, LinkParams, Radio};
use crate::proto::Command;
use crate::ringsim::{BatteryState, Ring, RtcState, Scenario, ScenarioError};
use crate::types::{Mac, Modality, MICROS_PER_SEC};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid environment file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid environment: {0}")]
    Invalid(String),
    #[error("scenario {path}: {source}")]
    Scenario { path: PathBuf, source: ScenarioError },
}

/// Run an offline recording before the host shows up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prelog {
    pub total_s: u32,
    pub segment_s: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RingSpec {
    pub name: Option<String>,
    pub mac: Option<Mac>,
    /// Scenario file, relative to the environment file.
    pub scenario: Option<PathBuf>,
    pub rssi_dbm: Option<f64>,
    pub offset_s: f64,
    pub drift_ppm: f64,
    pub battery_pct: Option<f64>,
    pub jitter: bool,
    pub faults: FaultProfile,
    pub fault_flags: Vec<Modality>,
    pub prelog: Option<Prelog>,
}

/// A simulated room: link parameters and the rings in range.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Environment {
    pub seed: u64,
    pub link: LinkParams,
    #[serde(rename = "ring")]
    pub rings: Vec<RingSpec>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Environment {
    /// `n` resting rings on a default link.
    pub fn with_rings(n: usize, seed: u64) -> Self {
        Environment { seed, rings: vec![RingSpec::default(); n], ..Self::default() }
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, EnvError> {
        let mut env: Environment = toml::from_str(text)?;
        env.base_dir = base_dir.to_path_buf();
        env.link.validate().map_err(EnvError::Invalid)?;
        Ok(env)
    }

    pub fn load(path: &Path) -> Result<Self, EnvError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| EnvError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn build(&self) -> Result<Radio, EnvError> {
        self.link.validate().map_err(EnvError::Invalid)?;
        let mut radio = Radio::new(self.link, self.seed);
        for (k, spec) in self.rings.iter().enumerate() {
            let mac = spec.mac.unwrap_or_else(|| Mac::for_index(k as u32 + 1));
            let scenario = match &spec.scenario {
                Some(p) => {
                    let path = self.base_dir.join(p);
                    Scenario::load(&path).map_err(|source| EnvError::Scenario { path, source })?
                }
                None => Scenario::resting(self.seed.wrapping_add(k as u64)),
            };
            let offset_us = (spec.offset_s * MICROS_PER_SEC as f64).round() as i64;
            let mut ring = Ring::new(mac, scenario)
                .with_rtc(RtcState::new(offset_us, spec.drift_ppm))
                .with_jitter(spec.jitter);
            if let Some(name) = &spec.name {
                ring = ring.with_name(name.clone());
            }
            for &m in &spec.fault_flags {
                ring.set_fault(m, true);
            }
            if let Some(p) = spec.prelog {
                let cmd = Command::ScheduleOffline { start_delay_s: 0, total_s: p.total_s, segment_s: p.segment_s };
                ring.apply_command(&cmd)
                    .map_err(|e| EnvError::Invalid(format!("ring {mac}: prelog rejected: {e}")))?;
                ring.advance(u64::from(p.total_s) * MICROS_PER_SEC + 1);
            }
            if let Some(pct) = spec.battery_pct {
                ring = ring.with_battery(BatteryState::with_percent(pct));
            }
            if radio.ring(mac).is_some() {
                return Err(EnvError::Invalid(format!("duplicate ring address {mac}")));
            }
            let rssi = spec.rssi_dbm.unwrap_or(-45.0 - 8.0 * (k % 7) as f64);
            radio.add_ring(ring, rssi);
            radio.set_faults(mac, spec.faults).expect("ring was just added");
        }
        Ok(radio)
    }
}
