use serde::{Deserialize, Serialize};

use super::hr::HrEstimate;

/// Mean absolute difference of two `(midpoint_us, bpm)` series over the
/// midpoints they share. `None` when nothing lines up.
pub fn mae(estimates: &[(u64, f64)], reference: &[(u64, f64)]) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for &(t, a) in estimates {
        if let Some(&(_, b)) = reference.iter().find(|(u, _)| *u == t) {
            sum += (a - b).abs();
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub scenario: String,
    pub mae_bpm: f64,
    /// Signed error per window with an estimate.
    pub errors: Vec<f64>,
    /// Windows whose estimate was withheld.
    pub withheld: usize,
}

impl EvalResult {
    /// Score estimates against ground truth sampled at each window midpoint.
    pub fn evaluate(scenario: impl Into<String>, estimates: &[HrEstimate], truth: impl Fn(u64) -> f64) -> Self {
        let mut errors = Vec::new();
        let mut withheld = 0;
        for e in estimates {
            match e.bpm {
                Some(b) => errors.push(b - truth(e.midpoint_us())),
                None => withheld += 1,
            }
        }
        let mae_bpm = if errors.is_empty() {
            f64::NAN
        } else {
            errors.iter().map(|e| e.abs()).sum::<f64>() / errors.len() as f64
        };
        EvalResult { scenario: scenario.into(), mae_bpm, errors, withheld }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn arithmetic() {
        assert_eq!(mae(&[(1, 72.0), (2, 74.0)], &[(1, 70.0), (2, 76.0)]), Some(2.0));
        assert_eq!(mae(&[(1, 72.0)], &[(1, 72.0)]), Some(0.0));
        assert_eq!(mae(&[(5, 61.5)], &[(5, 60.0)]), Some(1.5));
        assert_eq!(mae(&[(5, 61.5)], &[(6, 60.0)]), None);
    }

    #[test]
    fn evaluate_skips_withheld() {
        let e = |s: u64, bpm| HrEstimate { window_start_us: s, window_end_us: s + 8, bpm, confidence: 1.0 };
        let r = EvalResult::evaluate("x", &[e(0, Some(71.0)), e(8, None), e(16, Some(68.0))], |_| 70.0);
        assert_eq!(r.mae_bpm, 1.5);
        assert_eq!(r.withheld, 1);
    }

    proptest! {
        #[test]
        fn symmetric_and_zero_iff_equal(
            a in proptest::collection::vec(30.0f64..240.0, 1..20),
            b in proptest::collection::vec(30.0f64..240.0, 1..20),
        ) {
            let sa: Vec<(u64, f64)> = a.iter().enumerate().map(|(i, v)| (i as u64, *v)).collect();
            let sb: Vec<(u64, f64)> = b.iter().enumerate().map(|(i, v)| (i as u64, *v)).collect();
            prop_assert_eq!(mae(&sa, &sb), mae(&sb, &sa));
            prop_assert_eq!(mae(&sa, &sa), Some(0.0));
            let n = a.len().min(b.len());
            let equal = a[..n] == b[..n];
            prop_assert_eq!(mae(&sa, &sb) == Some(0.0), equal);
        }
    }
}
