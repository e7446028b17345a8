use super::filter::band;

/// Hysteresis half-width in g.
pub const HYSTERESIS_G: f64 = 0.05;

const LOW_HZ: f64 = 0.5;
const HIGH_HZ: f64 = 3.0;

/// Movement cycles in an accelerometer window (rows in g): upward crossings
/// of the band-passed dynamic magnitude `|a| - 1 g`, re-armed only after the
/// signal falls below the lower hysteresis level.
pub fn activity_counts(accel_g: &[[f64; 3]], fs: f64) -> u32 {
    let dyn_mag: Vec<f64> = accel_g
        .iter()
        .map(|a| (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt() - 1.0)
        .collect();
    let y = band(&dyn_mag, fs, LOW_HZ, HIGH_HZ);
    let mut armed = true;
    let mut count = 0;
    for v in y {
        if armed && v > HYSTERESIS_G {
            count += 1;
            armed = false;
        } else if v < -HYSTERESIS_G {
            armed = true;
        }
    }
    count
}
