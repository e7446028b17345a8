use serde::{Deserialize, Serialize};

use super::{Host, HostError};
use crate::transport::LinkError;
use crate::proto::{Command, Message, Response};
use crate::types::{EpochTime, Mac, SIM_EPOCH_UNIX_US};

/// Offsets at or below this magnitude need no trim.
pub const CALIB_THRESHOLD_US: i64 = 1_000_000;
pub const CALIB_MAX_ITERATIONS: usize = 8;
/// Exchanges a calibration step may time out before the run gives up.
const STEP_RETRIES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationIteration {
    /// Host epoch when the probe that got through was sent.
    pub host_send_us: u64,
    /// Device RTC reading when the probe arrived.
    pub device_time_us: u64,
    pub rtt_us: u64,
    /// `device_time - (host_send + rtt/2)`.
    pub offset_estimate_us: i64,
    pub trimmed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub mac: Mac,
    pub iterations: Vec<CalibrationIteration>,
    /// Device clock minus host clock, as last measured.
    pub final_offset_us: i64,
    pub converged: bool,
}

fn retrying<T>(mut step: impl FnMut() -> Result<T, HostError>) -> Result<T, HostError> {
    let mut left = STEP_RETRIES;
    loop {
        match step() {
            Err(HostError::Link(LinkError::Timeout { .. })) if left > 0 => left -= 1,
            other => return other,
        }
    }
}

impl Host {
    /// One probe: measure the device clock against the host's.
    pub fn probe(&mut self, mac: Mac) -> Result<CalibrationIteration, HostError> {
        let host_time = EpochTime::from_micros(self.now_epoch_us());
        let ex = self.command(mac, &Command::CalibProbe { host_time })?;
        let Message::Response(Response::CalibReading { device_time }) = ex.reply else {
            return Err(HostError::UnexpectedReply("CalibProbe"));
        };
        let host_send_us = SIM_EPOCH_UNIX_US + ex.attempt_sent_us;
        let rtt_us = ex.rtt_us();
        let device_time_us = device_time.as_micros();
        Ok(CalibrationIteration {
            host_send_us,
            device_time_us,
            rtt_us,
            offset_estimate_us: device_time_us as i64 - (host_send_us + rtt_us / 2) as i64,
            trimmed: false,
        })
    }

    /// Probe, trim while the offset exceeds one second, and record every step.
    /// The trim carries the host clock plus half the last round trip, the
    /// expected one-way delay, so the RTC reads host time on arrival.
    pub fn calibrate(&mut self, mac: Mac) -> Result<CalibrationReport, HostError> {
        let mut report = CalibrationReport { mac, iterations: Vec::new(), final_offset_us: 0, converged: false };
        for _ in 0..CALIB_MAX_ITERATIONS {
            let mut it = retrying(|| self.probe(mac))?;
            report.final_offset_us = it.offset_estimate_us;
            if it.offset_estimate_us.abs() <= CALIB_THRESHOLD_US {
                report.iterations.push(it);
                report.converged = true;
                break;
            }
            retrying(|| {
                let epoch = EpochTime::from_micros(self.now_epoch_us() + it.rtt_us / 2);
                self.expect_ack(mac, &Command::CalibTrim { epoch })
            })?;
            it.trimmed = true;
            report.iterations.push(it);
        }
        self.calibrations.insert(mac, report.clone());
        if report.converged {
            Ok(report)
        } else {
            Err(HostError::NotConverged(Box::new(report)))
        }
    }

    /// Best estimate of the device clock offset: the last calibration, or a
    /// single fresh probe.
    pub fn clock_offset_us(&mut self, mac: Mac) -> Result<i64, HostError> {
        match self.calibrations.get(&mac) {
            Some(r) => Ok(r.final_offset_us),
            None => Ok(self.probe(mac)?.offset_estimate_us),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ringsim::{Ring, RtcState, Scenario};
    use crate::transport::{Latency, LinkParams, Radio};

    fn host_with(offset_us: i64, params: LinkParams) -> (Host, Mac) {
        let mut radio = Radio::new(params, 21);
        let mac = radio.add_ring(
            Ring::new(Mac::for_index(1), Scenario::resting(1)).with_rtc(RtcState::new(offset_us, 0.0)),
            -50.0,
        );
        radio.connect(mac).unwrap();
        (Host::new(radio), mac)
    }

    fn true_error(h: &Host, mac: Mac) -> i64 {
        h.radio().ring(mac).unwrap().rtc().error_us(h.radio().now_us())
    }

    #[test]
    fn five_second_offset_takes_two_iterations() {
        let (mut h, mac) = host_with(5_000_000, LinkParams::symmetric(Latency::fixed(15.0)));
        let r = h.calibrate(mac).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations.len(), 2);
        assert!((r.iterations[0].offset_estimate_us - 5_000_000).abs() < 1_000);
        assert!(r.iterations[0].trimmed && !r.iterations[1].trimmed);
        assert!(r.final_offset_us.abs() < 1_000);
        assert!(true_error(&h, mac).abs() < 1_000);
    }

    #[test]
    fn synchronized_device_needs_no_trim() {
        let (mut h, mac) = host_with(0, LinkParams::symmetric(Latency::fixed(15.0)));
        let r = h.calibrate(mac).unwrap();
        assert_eq!(r.iterations.len(), 1);
        assert!(!r.iterations[0].trimmed);
        assert_eq!(r.final_offset_us, 0);
    }

    #[test]
    fn asymmetric_latency_biases_by_half_the_difference() {
        let params = LinkParams { latency_up: Latency::fixed(10.0), latency_down: Latency::fixed(50.0), ..LinkParams::default() };
        let (mut h, mac) = host_with(0, params);
        let r = h.calibrate(mac).unwrap();
        assert!(r.converged);
        // The device is on time, but the estimate blames the slow downlink.
        assert_eq!(r.final_offset_us, -20_000);
    }

    #[test]
    fn rtt_is_thirty_ms_on_fifteen_ms_legs() {
        let (mut h, mac) = host_with(0, LinkParams::symmetric(Latency::fixed(15.0)));
        assert_eq!(h.probe(mac).unwrap().rtt_us, 30_000);
    }

    #[test]
    fn converges_under_loss() {
        let params = LinkParams::symmetric(Latency::between(10.0, 40.0)).with_loss(0.3);
        let (mut h, mac) = host_with(-(1 << 31), params);
        let r = h.calibrate(mac).unwrap();
        assert!(r.converged && r.iterations.len() <= CALIB_MAX_ITERATIONS);
        assert!(true_error(&h, mac).abs() <= CALIB_THRESHOLD_US);
    }
}
