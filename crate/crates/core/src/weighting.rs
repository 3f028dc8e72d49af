//! Difficulty-based weight functions.
//!
//! Every function here is pure. Difficulty is `d = 1 - p` where `p` is the
//! model's probability for the labelled class, and `l = -ln p` is the
//! per-sample cross-entropy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shape::{self, Shape, ShapeOptions};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before any log or power.
pub const PROB_EPS: f64 = 1e-12;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// A weighting family together with its hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightScheme {
    #[serde(rename = "flexw")]
    FlexW { gamma: f64, alpha: f64 },
    #[serde(rename = "flexw_spl")]
    FlexWSpl { gamma: f64, alpha: f64, lambda: f64 },
    #[serde(rename = "flexw_class_scaled")]
    FlexWClassScaled { gamma: f64, alpha: f64, class_scales: Vec<f64> },
    Focal { gamma: f64 },
    SplBinary { lambda: f64 },
    SplLog { lambda: f64 },
    ClassBalance { beta: f64 },
    Uniform,
}

/// Which difficulty band receives the largest weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorityMode {
    EasyFirst,
    MediumFirst,
    HardFirst,
    TwoEndsFirst,
    Flat,
}

impl PriorityMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PriorityMode::EasyFirst => "easy_first",
            PriorityMode::MediumFirst => "medium_first",
            PriorityMode::HardFirst => "hard_first",
            PriorityMode::TwoEndsFirst => "two_ends_first",
            PriorityMode::Flat => "flat",
        }
    }

    pub(crate) fn from_shape(shape: Shape) -> Self {
        match shape {
            Shape::Flat => PriorityMode::Flat,
            Shape::Increasing => PriorityMode::HardFirst,
            Shape::Decreasing => PriorityMode::EasyFirst,
            Shape::Peak => PriorityMode::MediumFirst,
            Shape::Valley => PriorityMode::TwoEndsFirst,
        }
    }
}

impl std::fmt::Display for PriorityMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PriorityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy_first" => Ok(PriorityMode::EasyFirst),
            "medium_first" => Ok(PriorityMode::MediumFirst),
            "hard_first" => Ok(PriorityMode::HardFirst),
            "two_ends_first" => Ok(PriorityMode::TwoEndsFirst),
            "flat" => Ok(PriorityMode::Flat),
            other => Err(Error::config(format!("unknown priority mode `{other}`"))),
        }
    }
}

/// Per-sample signals a scheme may consume.
#[derive(Debug, Clone, Copy)]
pub struct SampleSignal {
    /// Probability of the labelled class.
    pub prob: f64,
    /// Cross-entropy of the labelled class.
    pub loss: f64,
    pub label: usize,
    /// Training-set count of the labelled class.
    pub class_count: usize,
}

impl SampleSignal {
    pub fn from_prob(prob: f64, label: usize, class_count: usize) -> Self {
        SampleSignal { prob, loss: -clamp_prob(prob).ln(), label, class_count }
    }
}

impl WeightScheme {
    pub fn validate(&self) -> Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be finite")))
            }
        };
        let alpha_ok = |alpha: f64| {
            finite("alpha", alpha)?;
            if alpha < 0.0 {
                return Err(Error::config(format!("alpha must be >= 0, got {alpha}")));
            }
            Ok(())
        };
        match self {
            WeightScheme::FlexW { gamma, alpha } => {
                finite("gamma", *gamma)?;
                alpha_ok(*alpha)
            }
            WeightScheme::FlexWSpl { gamma, alpha, lambda } => {
                finite("gamma", *gamma)?;
                alpha_ok(*alpha)?;
                if !(*lambda > 0.0) {
                    return Err(Error::config(format!("lambda must be > 0, got {lambda}")));
                }
                Ok(())
            }
            WeightScheme::FlexWClassScaled { gamma, alpha, class_scales } => {
                finite("gamma", *gamma)?;
                alpha_ok(*alpha)?;
                if class_scales.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
                    return Err(Error::config("class_scales must all be finite and > 0"));
                }
                Ok(())
            }
            WeightScheme::Focal { gamma } => finite("gamma", *gamma),
            WeightScheme::SplBinary { lambda } => {
                if !(*lambda > 0.0) {
                    return Err(Error::config(format!("lambda must be > 0, got {lambda}")));
                }
                Ok(())
            }
            WeightScheme::SplLog { lambda } => {
                if !(*lambda > 0.0 && *lambda < 1.0) {
                    return Err(Error::config(format!("lambda must be in (0,1), got {lambda}")));
                }
                Ok(())
            }
            WeightScheme::ClassBalance { beta } => {
                if !(0.0..1.0).contains(beta) {
                    return Err(Error::config(format!("beta must be in [0,1), got {beta}")));
                }
                Ok(())
            }
            WeightScheme::Uniform => Ok(()),
        }
    }

    /// True for schemes whose weight depends on class membership.
    pub fn is_class_level(&self) -> bool {
        matches!(self, WeightScheme::FlexWClassScaled { .. } | WeightScheme::ClassBalance { .. })
    }

    /// Unnormalized weight of one sample.
    pub fn weight(&self, s: &SampleSignal) -> Result<f64> {
        let p = clamp_prob(s.prob);
        match self {
            WeightScheme::FlexW { gamma, alpha } => flexw_weight(1.0 - p, *gamma, *alpha),
            WeightScheme::FlexWSpl { gamma, alpha, lambda } => {
                flexw_spl_weight(p, s.loss, *gamma, *alpha, *lambda)
            }
            WeightScheme::FlexWClassScaled { gamma, alpha, class_scales } => {
                let c = *class_scales.get(s.label).ok_or_else(|| {
                    Error::config(format!("no class scale for label {}", s.label))
                })?;
                flexw_scaled_weight(p, *gamma, *alpha, c)
            }
            WeightScheme::Focal { gamma } => focal_weight(p, *gamma),
            WeightScheme::SplBinary { lambda } => spl_binary_weight(s.loss, *lambda),
            WeightScheme::SplLog { lambda } => spl_log_weight(s.loss, *lambda),
            WeightScheme::ClassBalance { beta } => class_balance_weight(*beta, s.class_count),
            WeightScheme::Uniform => Ok(1.0),
        }
    }
}

/// A weight curve over difficulty in `[0, 1]`.
pub trait DifficultyCurve {
    fn weight_at(&self, d: f64) -> Result<f64>;
}

impl DifficultyCurve for WeightScheme {
    fn weight_at(&self, d: f64) -> Result<f64> {
        if self.is_class_level() {
            return Err(Error::domain("class-level schemes have no difficulty curve"));
        }
        if !(0.0..=1.0).contains(&d) {
            return Err(Error::domain(format!("difficulty {d} outside [0,1]")));
        }
        match self {
            // FlexW is evaluated at the exact difficulty so that the
            // singularity at d + alpha = 0 surfaces.
            WeightScheme::FlexW { gamma, alpha } => flexw_weight(d, *gamma, *alpha),
            WeightScheme::Focal { gamma } => focal_weight((1.0 - d).max(PROB_EPS), *gamma),
            _ => {
                let p = 1.0 - d;
                self.weight(&SampleSignal::from_prob(p, 0, 1))
            }
        }
    }
}

/// `(d + alpha)^gamma * exp(-gamma (d + alpha))`.
pub fn flexw_weight(d: f64, gamma: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&d) {
        return Err(Error::domain(format!("difficulty {d} outside [0,1]")));
    }
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::domain(format!("alpha must be >= 0, got {alpha}")));
    }
    if !gamma.is_finite() {
        return Err(Error::domain("gamma must be finite"));
    }
    let t = d + alpha;
    if t == 0.0 && gamma < 0.0 {
        return Err(Error::Singular(format!(
            "d + alpha = 0 with gamma = {gamma} < 0"
        )));
    }
    Ok(t.powf(gamma) * (-gamma * t).exp())
}

/// Stationary points of the FlexW curve in the shifted variable `t = d + alpha`.
#[derive(Debug, Clone, PartialEq)]
pub enum StationaryPoints {
    /// `gamma = 0`: the curve is constant.
    FlatScheme,
    Points(Vec<f64>),
}

/// Roots of `gamma t^(gamma-1) e^(-gamma t) (1 - t)` on `[alpha, 1 + alpha]`.
pub fn flexw_stationary_points(gamma: f64, alpha: f64) -> StationaryPoints {
    if gamma == 0.0 {
        return StationaryPoints::FlatScheme;
    }
    let mut pts = Vec::new();
    if alpha == 0.0 && gamma > 1.0 {
        pts.push(0.0);
    }
    if alpha <= 1.0 && 1.0 <= 1.0 + alpha {
        pts.push(1.0);
    }
    StationaryPoints::Points(pts)
}

/// Focal weight `(1 - p)^gamma`.
pub fn focal_weight(p: f64, gamma: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::domain(format!("probability {p} outside (0,1]")));
    }
    if p == 1.0 && gamma < 0.0 {
        return Err(Error::Singular(format!("p = 1 with gamma = {gamma} < 0")));
    }
    Ok((1.0 - p).powf(gamma))
}

/// Hard self-paced weight: 1 when `l < lambda`, otherwise 0.
pub fn spl_binary_weight(l: f64, lambda: f64) -> Result<f64> {
    if !(l >= 0.0) {
        return Err(Error::domain(format!("loss {l} must be >= 0")));
    }
    if !(lambda > 0.0) {
        return Err(Error::domain(format!("lambda {lambda} must be > 0")));
    }
    Ok(if l < lambda { 1.0 } else { 0.0 })
}

/// Minimizer over `w in [0,1]` of `w l + xi w - xi^w / ln xi`, `xi = 1 - lambda`.
///
/// The objective is convex and its stationary point is `ln(l + xi) / ln xi`.
pub fn spl_log_weight(l: f64, lambda: f64) -> Result<f64> {
    if !(l >= 0.0) {
        return Err(Error::domain(format!("loss {l} must be >= 0")));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::domain(format!("lambda {lambda} outside (0,1)")));
    }
    if l >= lambda {
        return Ok(0.0);
    }
    let xi = 1.0 - lambda;
    Ok(((l + xi).ln() / xi.ln()).clamp(0.0, 1.0))
}

/// Effective-number class weight `(1 - beta) / (1 - beta^n_c)`.
pub fn class_balance_weight(beta: f64, n_c: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::domain(format!("beta {beta} outside [0,1)")));
    }
    if n_c == 0 {
        return Err(Error::domain("class count must be positive"));
    }
    Ok((1.0 - beta) / (1.0 - beta.powf(n_c as f64)))
}

/// FlexW gated by a self-paced loss threshold.
pub fn flexw_spl_weight(p: f64, l: f64, gamma: f64, alpha: f64, lambda: f64) -> Result<f64> {
    if !(l >= 0.0) {
        return Err(Error::domain(format!("loss {l} must be >= 0")));
    }
    if !(lambda > 0.0) {
        return Err(Error::domain(format!("lambda {lambda} must be > 0")));
    }
    if l > lambda {
        return Ok(0.0);
    }
    flexw_weight(1.0 - p, gamma, alpha)
}

/// FlexW multiplied by a per-class scale.
pub fn flexw_scaled_weight(p: f64, gamma: f64, alpha: f64, class_scale: f64) -> Result<f64> {
    if !class_scale.is_finite() || class_scale <= 0.0 {
        return Err(Error::domain(format!("class scale {class_scale} must be > 0")));
    }
    Ok(class_scale * flexw_weight(1.0 - p, gamma, alpha)?)
}

/// Nonnegative per-sample weights for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    weights: Vec<f64>,
    normalized: bool,
}

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::domain(format!("weight {w} is negative or non-finite")));
        }
        Ok(WeightVector { weights, normalized: false })
    }

    pub fn ones(n: usize) -> Self {
        WeightVector { weights: vec![1.0; n], normalized: true }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.weights
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Rescales to mean one. Order and ties are preserved.
pub fn normalize_weights(raw: &WeightVector) -> Result<WeightVector> {
    let n = raw.weights.len();
    if n == 0 {
        return Err(Error::Empty("weight vector"));
    }
    let sum: f64 = raw.weights.iter().sum();
    if sum <= 0.0 {
        return Err(Error::DegenerateBatch);
    }
    let scale = n as f64 / sum;
    Ok(WeightVector {
        weights: raw.weights.iter().map(|w| w * scale).collect(),
        normalized: true,
    })
}

/// `(1/N) sum w_i l_i`.
pub fn weighted_loss(losses: &[f64], weights: &WeightVector) -> Result<f64> {
    if losses.len() != weights.len() {
        return Err(Error::LengthMismatch { left: losses.len(), right: weights.len() });
    }
    if losses.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = losses.iter().zip(&weights.weights).map(|(l, w)| l * w).sum();
    Ok(total / losses.len() as f64)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// FlexW-weighted cross-entropy of a binary logit: `w(1 - p) * (-ln p)`.
pub fn flexw_loss(z: f64, gamma: f64, alpha: f64) -> Result<f64> {
    let p = clamp_prob(sigmoid(z));
    Ok(flexw_weight(1.0 - p, gamma, alpha)? * -p.ln())
}

/// `dL/dz` of [`flexw_loss`], differentiating through the weight.
///
/// With `t = 1 - p + alpha`:
/// `p (1-p) t^(gamma-1) e^(-gamma t) (gamma (p - alpha) ln p - t / p)`.
pub fn flexw_loss_gradient(z: f64, gamma: f64, alpha: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::domain("logit must be finite"));
    }
    if !(alpha >= 0.0) {
        return Err(Error::domain(format!("alpha must be >= 0, got {alpha}")));
    }
    let p = clamp_prob(sigmoid(z));
    let t = 1.0 - p + alpha;
    let envelope = p * (1.0 - p) * t.powf(gamma - 1.0) * (-gamma * t).exp();
    Ok(envelope * (gamma * (p - alpha) * p.ln() - t / p))
}

/// Minimum grid size accepted by [`classify_mode`].
pub const MIN_CLASSIFY_GRID: usize = 16;
/// Reversals smaller than this fraction of `max |w|` are ignored.
pub const CLASSIFY_REL_TOL: f64 = 1e-6;

/// Samples `scheme` on a uniform grid over `[0,1]` and names its priority mode.
pub fn classify_mode(scheme: &WeightScheme, grid_size: usize) -> Result<PriorityMode> {
    scheme.validate()?;
    classify_curve(scheme, grid_size)
}

pub fn classify_curve<C: DifficultyCurve + ?Sized>(curve: &C, grid_size: usize) -> Result<PriorityMode> {
    if grid_size < MIN_CLASSIFY_GRID {
        return Err(Error::domain(format!(
            "grid size {grid_size} below minimum {MIN_CLASSIFY_GRID}"
        )));
    }
    let values = sample_curve(curve, grid_size)?
        .into_iter()
        .map(|(_, w)| w)
        .collect::<Vec<_>>();
    let scale = values.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    let opts = ShapeOptions {
        tolerance: CLASSIFY_REL_TOL * scale,
        arm_ratio: shape::DEFAULT_ARM_RATIO,
    };
    Ok(PriorityMode::from_shape(shape::analyze(&values, opts)?))
}

/// `(d, w(d))` pairs on `grid_size` evenly spaced points, both ends included.
pub fn sample_curve<C: DifficultyCurve + ?Sized>(curve: &C, grid_size: usize) -> Result<Vec<(f64, f64)>> {
    if grid_size < 2 {
        return Err(Error::domain("grid needs at least two points"));
    }
    let step = 1.0 / (grid_size - 1) as f64;
    (0..grid_size)
        .map(|i| {
            let d = if i + 1 == grid_size { 1.0 } else { i as f64 * step };
            curve.weight_at(d).map(|w| (d, w))
        })
        .collect()
}
