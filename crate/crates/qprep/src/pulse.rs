//! Piecewise-constant Rabi drive over a finite horizon.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default Rabi cut-off in units of the level splitting.
pub const DEFAULT_OMEGA_CAP_FACTOR: f64 = 20.0;

/// Relative tolerance for the step grid tiling a segment.
const GRID_TOL: f64 = 1e-6;

/// One constant-amplitude stretch of the drive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSegment {
    /// Length in units of `1/epsilon`; strictly positive.
    pub duration: f64,
    /// Rabi amplitude in units of `epsilon`.
    pub omega: f64,
}

/// A right-continuous piecewise-constant drive `Omega(t)` on `[0, T)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlPulse {
    segments: Vec<PulseSegment>,
    total_time: f64,
}

impl ControlPulse {
    /// Validates durations and the amplitude cap; exceeding the cap is an
    /// error rather than a clamp.
    pub fn new(segments: Vec<PulseSegment>, omega_cap: f64) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Invalid("pulse needs at least one segment".into()));
        }
        let mut total = 0.0;
        for seg in &segments {
            if !seg.duration.is_finite() || seg.duration <= 0.0 {
                return Err(Error::Invalid(format!(
                    "segment duration must be > 0, got {}",
                    seg.duration
                )));
            }
            if !seg.omega.is_finite() {
                return Err(Error::Invalid("segment amplitude must be finite".into()));
            }
            if seg.omega.abs() > omega_cap {
                return Err(Error::ControlCapExceeded {
                    omega: seg.omega,
                    cap: omega_cap,
                });
            }
            total += seg.duration;
        }
        Ok(ControlPulse {
            segments,
            total_time: total,
        })
    }

    /// Single constant pulse.
    pub fn constant(omega: f64, duration: f64, omega_cap: f64) -> Result<Self> {
        ControlPulse::new(vec![PulseSegment { duration, omega }], omega_cap)
    }

    /// Splits `total_time` into `values.len()` near-equal segments whose
    /// boundaries land on the `dt` grid (earlier segments absorb the
    /// remainder steps). `total_time` itself must be a multiple of `dt`.
    pub fn piecewise_on_grid(
        values: &[f64],
        total_time: f64,
        dt: f64,
        omega_cap: f64,
    ) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Invalid("pulse needs at least one segment".into()));
        }
        let n_steps = steps_in(total_time, dt)?;
        if n_steps < values.len() {
            return Err(Error::Invalid(format!(
                "{} steps cannot host {} segments",
                n_steps,
                values.len()
            )));
        }
        let m = values.len();
        let base = n_steps / m;
        let extra = n_steps % m;
        let segments = values
            .iter()
            .enumerate()
            .map(|(j, &omega)| PulseSegment {
                duration: (base + usize::from(j < extra)) as f64 * dt,
                omega,
            })
            .collect();
        ControlPulse::new(segments, omega_cap)
    }

    pub fn segments(&self) -> &[PulseSegment] {
        &self.segments
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }

    /// Right-continuous lookup; times at or past the end return the last
    /// amplitude so that rounding at `t = T` stays harmless.
    pub fn value_at(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for seg in &self.segments {
            acc += seg.duration;
            if t < acc {
                return seg.omega;
            }
        }
        self.segments.last().map(|s| s.omega).unwrap_or(0.0)
    }

    /// Integer step counts per segment, or [`Error::SegmentGridMismatch`] if
    /// `dt` fails to tile a segment to within one part in 1e6.
    pub fn steps_per_segment(&self, dt: f64) -> Result<Vec<usize>> {
        self.segments
            .iter()
            .map(|seg| steps_in(seg.duration, dt))
            .collect()
    }

    /// Total step count across segments.
    pub fn total_steps(&self, dt: f64) -> Result<usize> {
        Ok(self.steps_per_segment(dt)?.iter().sum())
    }
}

/// Rounds `duration / dt` to an integer, demanding the remainder stay below
/// one part in 1e6 of the duration.
pub fn steps_in(duration: f64, dt: f64) -> Result<usize> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Invalid(format!("dt must be > 0, got {dt}")));
    }
    let ratio = duration / dt;
    let n = ratio.round();
    let remainder = (ratio - n).abs();
    if remainder > GRID_TOL * ratio.max(1.0) || n < 1.0 {
        return Err(Error::SegmentGridMismatch {
            dt,
            duration,
            remainder,
        });
    }
    Ok(n as usize)
}

/// Snaps a duration onto the integration grid: the nearest positive multiple
/// of `dt`.
pub fn snap_to_grid(duration: f64, dt: f64) -> f64 {
    ((duration / dt).round().max(1.0)) * dt
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_is_right_continuous() {
        let p = ControlPulse::new(
            vec![
                PulseSegment { duration: 1.0, omega: 0.5 },
                PulseSegment { duration: 2.0, omega: -0.25 },
            ],
            20.0,
        )
        .unwrap();
        assert_eq!(p.value_at(0.0), 0.5);
        assert_eq!(p.value_at(0.999), 0.5);
        assert_eq!(p.value_at(1.0), -0.25);
        assert_eq!(p.value_at(2.999), -0.25);
        assert_eq!(p.total_time(), 3.0);
    }

    #[test]
    fn cap_is_an_error_not_a_clamp() {
        let err = ControlPulse::constant(25.0, 1.0, 20.0).unwrap_err();
        assert_eq!(err.kind(), "control_cap_exceeded");
        assert!(ControlPulse::constant(-20.0, 1.0, 20.0).is_ok());
    }

    #[test]
    fn zero_duration_rejected() {
        assert!(ControlPulse::constant(1.0, 0.0, 20.0).is_err());
        assert!(ControlPulse::constant(1.0, -0.5, 20.0).is_err());
    }

    #[test]
    fn grid_tiling() {
        let p = ControlPulse::constant(0.5, 2.72, 20.0).unwrap();
        assert_eq!(p.steps_per_segment(0.01).unwrap(), vec![272]);
        assert!(p.steps_per_segment(0.015).is_err());
    }

    #[test]
    fn near_equal_grid_segments() {
        // 272 steps over three segments: 91 + 91 + 90.
        let p = ControlPulse::piecewise_on_grid(&[0.1, 0.2, 0.3], 2.72, 0.01, 20.0).unwrap();
        let steps = p.steps_per_segment(0.01).unwrap();
        assert_eq!(steps, vec![91, 91, 90]);
        assert!((p.total_time() - 2.72).abs() < 1e-12);
    }

    #[test]
    fn snapping() {
        assert!((snap_to_grid(2.7207, 0.01) - 2.72).abs() < 1e-12);
        assert_eq!(snap_to_grid(0.0001, 0.01), 0.01);
    }
}
