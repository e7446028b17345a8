//! Heart-rate estimation, activity counting and evaluation metrics.

mod activity;
mod filter;
mod hr;
mod metrics;

pub use activity::{activity_counts, HYSTERESIS_G};
pub use filter::{bandpass, Biquad, Cascade};
pub use hr::{detect_peaks, estimate_hr, HrEstimate, PeakParams, HR_WINDOW_S, MAD_K, REFRACTORY_S};
pub use metrics::{mae, EvalResult};
