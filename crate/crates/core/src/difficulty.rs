//! Difficulty distributions and the optimal-weight ratio.
//!
//! The training-set density `p_tr(d)` is a Laplace-smoothed histogram on
//! uniform bins over `[0,1]`. The weight that moves `p_tr` onto a target
//! `p_opt` is `tau(d) = p_opt(d) / p_tr(d)`, and the monotonicity pattern of
//! `tau` names the priority mode.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shape::{self, ShapeOptions};
use crate::weighting::{normalize_weights, DifficultyCurve, PriorityMode, WeightVector};

pub const DEFAULT_BINS: usize = 32;
/// Reversals in a median-filtered tau curve smaller than this fraction of
/// its median are ignored.
pub const TAU_REL_TOL: f64 = 0.1;
const INTEGRAL_TOL: f64 = 1e-9;

/// Difficulty as one minus the labelled-class probability.
pub fn difficulty_from_prob(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("probability {p} outside [0,1]")));
    }
    Ok(1.0 - p)
}

/// A piecewise-constant density on uniform bins over `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedDensity {
    edges: Vec<f64>,
    densities: Vec<f64>,
}

fn uniform_edges(bins: usize) -> Vec<f64> {
    (0..=bins).map(|i| i as f64 / bins as f64).collect()
}

impl BinnedDensity {
    /// Normalizes raw nonnegative counts (no smoothing).
    pub fn from_counts(counts: &[f64]) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::domain("need at least two bins"));
        }
        if counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::domain("counts must be finite and nonnegative"));
        }
        let total: f64 = counts.iter().sum();
        if total <= 0.0 {
            return Err(Error::Empty("histogram has no mass"));
        }
        let edges = uniform_edges(counts.len());
        let width = 1.0 / counts.len() as f64;
        let densities = counts.iter().map(|c| c / (total * width)).collect();
        Ok(BinnedDensity { edges, densities })
    }

    /// Builds from per-bin densities, which must integrate to one.
    pub fn from_densities(densities: Vec<f64>) -> Result<Self> {
        if densities.len() < 2 {
            return Err(Error::domain("need at least two bins"));
        }
        if densities.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::domain("densities must be finite and nonnegative"));
        }
        let out = BinnedDensity { edges: uniform_edges(densities.len()), densities };
        let integral = out.integral();
        if (integral - 1.0).abs() > INTEGRAL_TOL {
            return Err(Error::domain(format!("densities integrate to {integral}, not 1")));
        }
        Ok(out)
    }

    pub fn uniform(bins: usize) -> Self {
        BinnedDensity { edges: uniform_edges(bins), densities: vec![1.0; bins] }
    }

    pub fn bins(&self) -> usize {
        self.densities.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn bin_width(&self, b: usize) -> f64 {
        self.edges[b + 1] - self.edges[b]
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
    }

    pub fn integral(&self) -> f64 {
        (0..self.bins()).map(|b| self.densities[b] * self.bin_width(b)).sum()
    }

    /// Probability mass per bin.
    pub fn masses(&self) -> Vec<f64> {
        (0..self.bins()).map(|b| self.densities[b] * self.bin_width(b)).collect()
    }

    /// Half-open bins `[lo, hi)`; the last bin is closed.
    pub fn bin_index(&self, d: f64) -> usize {
        let n = self.bins();
        let i = (d * n as f64).floor();
        if i < 0.0 {
            0
        } else {
            (i as usize).min(n - 1)
        }
    }

    fn same_grid(&self, other: &BinnedDensity) -> bool {
        self.edges == other.edges
    }
}

/// Per-sample difficulties together with their smoothed density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyProfile {
    pub difficulties: Vec<f64>,
    pub epoch: usize,
    pub histogram: BinnedDensity,
}

impl DifficultyProfile {
    pub fn new(difficulties: Vec<f64>, epoch: usize, bins: usize) -> Result<Self> {
        let histogram = estimate_density(&difficulties, bins)?;
        Ok(DifficultyProfile { difficulties, epoch, histogram })
    }
}

/// Histogram density with add-one smoothing of every bin count.
pub fn estimate_density(difficulties: &[f64], bins: usize) -> Result<BinnedDensity> {
    if difficulties.is_empty() {
        return Err(Error::Empty("difficulty vector"));
    }
    if bins < 2 {
        return Err(Error::domain("need at least two bins"));
    }
    let mut counts = vec![1.0; bins];
    let grid = BinnedDensity::uniform(bins);
    for &d in difficulties {
        if !(0.0..=1.0).contains(&d) {
            return Err(Error::domain(format!("difficulty {d} outside [0,1]")));
        }
        counts[grid.bin_index(d)] += 1.0;
    }
    BinnedDensity::from_counts(&counts)
}

/// The ideal difficulty density `p_opt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetDensity {
    Uniform,
    Binned { density: BinnedDensity },
}

impl TargetDensity {
    /// Densities resampled onto `grid`.
    fn on_grid(&self, grid: &BinnedDensity) -> Result<Vec<f64>> {
        match self {
            TargetDensity::Uniform => Ok(vec![1.0; grid.bins()]),
            TargetDensity::Binned { density } => {
                if !density.same_grid(grid) {
                    return Err(Error::GridMismatch(format!(
                        "target has {} bins, profile has {}",
                        density.bins(),
                        grid.bins()
                    )));
                }
                Ok(density.densities.clone())
            }
        }
    }
}

/// `tau(d) = p_opt(d) / p_tr(d)` per bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauCurve {
    pub centers: Vec<f64>,
    /// Training density per bin.
    pub density: Vec<f64>,
    /// `None` where the training density is zero.
    pub tau: Vec<Option<f64>>,
    /// `None` when the curve is ambiguous.
    pub inferred_mode: Option<PriorityMode>,
}

impl TauCurve {
    fn defined(&self) -> (Vec<f64>, Vec<f64>) {
        self.centers
            .iter()
            .zip(&self.tau)
            .filter_map(|(c, t)| t.map(|t| (*c, t)))
            .unzip()
    }

    /// Piecewise-linear interpolation of the median-filtered curve, usable
    /// anywhere a weight curve is expected.
    pub fn as_curve(&self) -> Result<InterpolatedCurve> {
        let (xs, ys) = self.defined();
        if xs.len() < 2 {
            return Err(Error::Empty("tau curve has fewer than two defined bins"));
        }
        Ok(InterpolatedCurve { xs, ys: shape::median3(&ys) })
    }
}

/// Linear interpolation through `(xs, ys)` with constant extrapolation.
#[derive(Debug, Clone)]
pub struct InterpolatedCurve {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl DifficultyCurve for InterpolatedCurve {
    fn weight_at(&self, d: f64) -> Result<f64> {
        let n = self.xs.len();
        if d <= self.xs[0] {
            return Ok(self.ys[0]);
        }
        if d >= self.xs[n - 1] {
            return Ok(self.ys[n - 1]);
        }
        let j = self.xs.partition_point(|x| *x <= d);
        let (x0, x1) = (self.xs[j - 1], self.xs[j]);
        let f = (d - x0) / (x1 - x0);
        Ok(self.ys[j - 1] + f * (self.ys[j] - self.ys[j - 1]))
    }
}

pub fn tau_curve(p_opt: &TargetDensity, profile: &DifficultyProfile) -> Result<TauCurve> {
    tau_from_density(p_opt, &profile.histogram)
}

/// Tau against an arbitrary training density (smoothed or not).
pub fn tau_from_density(p_opt: &TargetDensity, p_tr: &BinnedDensity) -> Result<TauCurve> {
    let target = p_opt.on_grid(p_tr)?;
    let tau = target
        .iter()
        .zip(&p_tr.densities)
        .map(|(o, t)| if *t > 0.0 { Some(o / t) } else { None })
        .collect();
    let mut curve = TauCurve {
        centers: p_tr.centers(),
        density: p_tr.densities.clone(),
        tau,
        inferred_mode: None,
    };
    curve.inferred_mode = infer_mode_from_tau(&curve).ok();
    Ok(curve)
}

/// Names the priority mode implied by the shape of `tau`.
///
/// Bins are median-filtered (window 3) before the shape pass.
pub fn infer_mode_from_tau(tau: &TauCurve) -> Result<PriorityMode> {
    let (_, values) = tau.defined();
    if values.len() < 4 {
        return Err(Error::domain("tau curve needs at least four defined bins"));
    }
    let smoothed = shape::median3(&values);
    let mut sorted = smoothed.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let opts = ShapeOptions { tolerance: TAU_REL_TOL * median, arm_ratio: shape::DEFAULT_ARM_RATIO };
    Ok(PriorityMode::from_shape(shape::analyze(&smoothed, opts)?))
}

/// Tau of each sample's bin, before normalization.
pub fn tau_per_sample(profile: &DifficultyProfile, p_opt: &TargetDensity) -> Result<Vec<f64>> {
    let curve = tau_curve(p_opt, profile)?;
    profile
        .difficulties
        .iter()
        .map(|&d| {
            let b = profile.histogram.bin_index(d);
            curve.tau[b].ok_or_else(|| Error::domain(format!("tau undefined in bin {b}")))
        })
        .collect()
}

/// Per-sample tau, normalized to mean one.
pub fn optimal_weights(profile: &DifficultyProfile, p_opt: &TargetDensity) -> Result<WeightVector> {
    normalize_weights(&WeightVector::new(tau_per_sample(profile, p_opt)?)?)
}

/// Total-variation distance between two densities on the same grid.
pub fn density_distance(a: &BinnedDensity, b: &BinnedDensity) -> Result<f64> {
    if !a.same_grid(b) {
        return Err(Error::GridMismatch(format!("{} vs {} bins", a.bins(), b.bins())));
    }
    let sum: f64 = (0..a.bins())
        .map(|i| (a.densities[i] - b.densities[i]).abs() * a.bin_width(i))
        .sum();
    Ok(0.5 * sum)
}

/// Total-variation distance between the smoothed densities of two profiles.
pub fn distribution_shift(a: &DifficultyProfile, b: &DifficultyProfile) -> Result<f64> {
    density_distance(&a.histogram, &b.histogram)
}
