//! Monotone-run analysis of sampled curves.
//!
//! Both weight curves and τ curves are reduced to one of five coarse shapes
//! by a zig-zag pass with hysteresis: a change of direction only counts once
//! the reversal exceeds `tolerance`. A single interior extremum whose shorter
//! arm is tiny compared with the longer one is treated as a monotone curve;
//! a FlexW curve whose peak sits at d = 0.85 gives its largest weights to the
//! hardest samples, not to the middle band.

use crate::error::{Error, Result};

/// Coarse shape of a sampled curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Flat,
    Increasing,
    Decreasing,
    /// Rises, then falls.
    Peak,
    /// Falls, then rises.
    Valley,
}

/// Ratio below which the shorter arm of a peak or valley is ignored.
pub const DEFAULT_ARM_RATIO: f64 = 0.25;

#[derive(Debug, Clone, Copy)]
pub struct ShapeOptions {
    /// Absolute hysteresis; reversals no larger than this are ignored.
    pub tolerance: f64,
    pub arm_ratio: f64,
}

/// Indices of the turning points that survive the hysteresis, plus the
/// direction of the first run (+1 rising, -1 falling, 0 flat).
fn zigzag(values: &[f64], tolerance: f64) -> (Vec<usize>, i8) {
    let mut dir = 0i8;
    let (mut lo, mut hi) = (0usize, 0usize);
    let mut ext = 0usize;
    let mut pivots = Vec::new();
    let mut first_dir = 0i8;
    for (i, &v) in values.iter().enumerate().skip(1) {
        match dir {
            0 => {
                if v < values[lo] {
                    lo = i;
                }
                if v > values[hi] {
                    hi = i;
                }
                if v - values[lo] > tolerance {
                    dir = 1;
                    ext = i;
                } else if values[hi] - v > tolerance {
                    dir = -1;
                    ext = i;
                }
                first_dir = dir;
            }
            1 => {
                if v >= values[ext] {
                    ext = i;
                } else if values[ext] - v > tolerance {
                    pivots.push(ext);
                    dir = -1;
                    ext = i;
                }
            }
            _ => {
                if v <= values[ext] {
                    ext = i;
                } else if v - values[ext] > tolerance {
                    pivots.push(ext);
                    dir = 1;
                    ext = i;
                }
            }
        }
    }
    (pivots, first_dir)
}

/// Classifies `values` (sampled left to right on a uniform grid).
pub fn analyze(values: &[f64], opts: ShapeOptions) -> Result<Shape> {
    if values.len() < 2 {
        return Err(Error::Empty("curve needs at least two samples"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("curve contains non-finite values"));
    }
    let (pivots, first_dir) = zigzag(values, opts.tolerance);
    if first_dir == 0 {
        return Ok(Shape::Flat);
    }
    match pivots.len() {
        0 if first_dir > 0 => Ok(Shape::Increasing),
        0 => Ok(Shape::Decreasing),
        1 => {
            let turn = values[pivots[0]];
            let left = (turn - values[0]).abs();
            let right = (turn - values[values.len() - 1]).abs();
            let small = left.min(right);
            let large = left.max(right);
            let shape = if first_dir > 0 { Shape::Peak } else { Shape::Valley };
            if small < opts.arm_ratio * large {
                // Collapse onto the dominant arm.
                let rising = match shape {
                    Shape::Peak => left >= right,
                    _ => right > left,
                };
                Ok(if rising { Shape::Increasing } else { Shape::Decreasing })
            } else {
                Ok(shape)
            }
        }
        turns => Err(Error::AmbiguousCurve { turns }),
    }
}

/// Running median with a window of three; endpoints are kept.
pub fn median3(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n < 3 {
        return values.to_vec();
    }
    let mut out = Vec::with_capacity(n);
    out.push(values[0]);
    for w in values.windows(3) {
        let mut t = [w[0], w[1], w[2]];
        t.sort_by(f64::total_cmp);
        out.push(t[1]);
    }
    out.push(values[n - 1]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(tol: f64) -> ShapeOptions {
        ShapeOptions { tolerance: tol, arm_ratio: DEFAULT_ARM_RATIO }
    }

    #[test]
    fn basic_shapes() {
        let up: Vec<f64> = (0..10).map(f64::from).collect();
        let down: Vec<f64> = up.iter().rev().copied().collect();
        let peak: Vec<f64> = (0..11).map(|i| -((i - 5) as f64).powi(2)).collect();
        let valley: Vec<f64> = peak.iter().map(|v| -v).collect();
        assert_eq!(analyze(&up, opts(1e-9)).unwrap(), Shape::Increasing);
        assert_eq!(analyze(&down, opts(1e-9)).unwrap(), Shape::Decreasing);
        assert_eq!(analyze(&peak, opts(1e-9)).unwrap(), Shape::Peak);
        assert_eq!(analyze(&valley, opts(1e-9)).unwrap(), Shape::Valley);
        assert_eq!(analyze(&[1.0; 8], opts(1e-9)).unwrap(), Shape::Flat);
    }

    #[test]
    fn small_wiggles_are_ignored() {
        let v = [0.0, 1.0, 0.95, 2.0, 3.0, 2.98, 4.0];
        assert_eq!(analyze(&v, opts(0.1)).unwrap(), Shape::Increasing);
        assert!(matches!(analyze(&v, opts(0.01)), Err(Error::AmbiguousCurve { .. })));
    }

    #[test]
    fn short_arm_collapses() {
        // Rises by 10 then falls by 0.5: effectively increasing.
        let v = [0.0, 5.0, 10.0, 9.5];
        assert_eq!(analyze(&v, opts(1e-9)).unwrap(), Shape::Increasing);
        let v = [10.0, 5.0, 0.0, 0.5];
        assert_eq!(analyze(&v, opts(1e-9)).unwrap(), Shape::Decreasing);
        let v = [0.5, 0.0, 5.0, 10.0];
        assert_eq!(analyze(&v, opts(1e-9)).unwrap(), Shape::Increasing);
    }

    #[test]
    fn median_filter_removes_spikes() {
        let v = [1.0, 2.0, 9.0, 4.0, 5.0];
        assert_eq!(median3(&v), vec![1.0, 2.0, 4.0, 5.0, 5.0]);
    }
}
