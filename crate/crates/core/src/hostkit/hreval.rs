//! Heart-rate evaluation against scenario ground truth, run through the
//! full stack: ring, link, host session, live metrics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Host, HostError};
use crate::dsp::{EvalResult, HrEstimate};
use crate::ringsim::{Motion, Ring, Scenario};
use crate::transport::{LinkParams, Radio};
use crate::types::{Mac, SensorConfig, MICROS_PER_SEC};

pub const HR_EVAL_MIN_BPM: f64 = 50.0;
pub const HR_EVAL_MAX_BPM: f64 = 150.0;
/// SNR of the noisy condition.
pub const NOISY_SNR_DB: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HrCondition {
    /// Resting, noise-free PPG.
    Clean,
    /// Walking with additive noise at `NOISY_SNR_DB`.
    NoisyWalk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrTrial {
    pub index: usize,
    pub true_bpm: f64,
    pub result: EvalResult,
}

/// `count` constant-rate scenarios with rates drawn uniformly from
/// 50-150 BPM.
pub fn hr_scenarios(count: usize, seed: u64, condition: HrCondition) -> Vec<(f64, Scenario)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let bpm = rng.random_range(HR_EVAL_MIN_BPM..=HR_EVAL_MAX_BPM);
            let s_seed = seed.wrapping_mul(1_000).wrapping_add(k as u64);
            let scn = match condition {
                HrCondition::Clean => Scenario::constant(bpm, Motion::Rest, 25.0, s_seed).with_noise(false),
                HrCondition::NoisyWalk => {
                    Scenario::constant(bpm, Motion::Walk, 25.0, s_seed).with_snr_db(NOISY_SNR_DB)
                }
            };
            (bpm, scn)
        })
        .collect()
}

/// Stream `scenario` for `duration_s` over a lossless link and score the
/// session's live heart-rate updates.
pub fn run_hr_trial(name: &str, scenario: Scenario, duration_s: u32) -> Result<EvalResult, HostError> {
    let mut radio = Radio::new(LinkParams::default(), 0);
    let mac = radio.add_ring(Ring::new(Mac::for_index(1), scenario.clone()), -50.0);
    let mut host = Host::new(radio);
    host.connect(mac)?;
    let mut s = host.start_session(mac, SensorConfig::reference(), duration_s * 1000)?;
    host.run_until_ended(&mut s, (u64::from(duration_s) + 5) * MICROS_PER_SEC)?;
    let origin = s.records.first().map_or(0, |r| r.timestamp_us);
    let estimates: Vec<HrEstimate> = s
        .metrics
        .iter()
        .map(|m| HrEstimate {
            window_start_us: m.window_start_us,
            window_end_us: m.window_end_us,
            bpm: m.hr_bpm,
            confidence: m.confidence,
        })
        .collect();
    Ok(EvalResult::evaluate(name, &estimates, |mid| scenario.hr_at(mid.saturating_sub(origin))))
}

pub fn hr_benchmark(
    count: usize,
    seed: u64,
    condition: HrCondition,
    duration_s: u32,
) -> Result<Vec<HrTrial>, HostError> {
    hr_scenarios(count, seed, condition)
        .into_iter()
        .enumerate()
        .map(|(index, (true_bpm, scn))| {
            let result = run_hr_trial(&format!("{condition:?}-{index}"), scn, duration_s)?;
            Ok(HrTrial { index, true_bpm, result })
        })
        .collect()
}

/// Mean absolute error over every scored window of every trial.
pub fn pooled_mae(trials: &[HrTrial]) -> f64 {
    let errs: Vec<f64> = trials.iter().flat_map(|t| t.result.errors.iter().map(|e| e.abs())).collect();
    if errs.is_empty() {
        f64::NAN
    } else {
        errs.iter().sum::<f64>() / errs.len() as f64
    }
}
