//! Monte Carlo bias/variance study on weighted polynomial regression.
//!
//! Inputs live on `[-1, 1]`, split into easy / medium / hard regions. For
//! every degree in the grid, `replicates` training sets are drawn, a
//! region-weighted least-squares polynomial is fitted to each, and squared
//! bias and variance are measured pointwise against the noiseless target on
//! a dense evaluation grid.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{derive_seed, Error, Result};

/// Minimum number of Monte Carlo training sets.
pub const MIN_REPLICATES: usize = 50;

/// Slack allowed by the monotonicity checks, as a fraction of the series range.
pub const MONOTONE_REL_TOL: f64 = 0.05;

/// Absolute slack for terms that are zero up to rounding.
pub const MONOTONE_ABS_TOL: f64 = 1e-10;

/// Reciprocal condition number below which a normal matrix counts as singular.
const SINGULAR_RCOND: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Easy,
    Medium,
    Hard,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::Easy, Region::Medium, Region::Hard];

    fn index(self) -> usize {
        match self {
            Region::Easy => 0,
            Region::Medium => 1,
            Region::Hard => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Region::Easy => "easy",
            Region::Medium => "medium",
            Region::Hard => "hard",
        }
    }
}

impl std::str::FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(Region::Easy),
            "medium" => Ok(Region::Medium),
            "hard" => Ok(Region::Hard),
            other => Err(Error::config(format!("unknown region `{other}`"))),
        }
    }
}

/// Easy is `[-1, easy_end)`, medium `[easy_end, hard_start)`, hard `[hard_start, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionBounds {
    pub easy_end: f64,
    pub hard_start: f64,
}

impl Default for RegionBounds {
    fn default() -> Self {
        RegionBounds { easy_end: -1.0 / 3.0, hard_start: 1.0 / 3.0 }
    }
}

impl RegionBounds {
    pub fn validate(&self) -> Result<()> {
        let ok = self.easy_end.is_finite()
            && self.hard_start.is_finite()
            && -1.0 < self.easy_end
            && self.easy_end < self.hard_start
            && self.hard_start < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::config("region bounds must satisfy -1 < easy_end < hard_start < 1"))
        }
    }

    pub fn region_of(&self, x: f64) -> Region {
        if x < self.easy_end {
            Region::Easy
        } else if x < self.hard_start {
            Region::Medium
        } else {
            Region::Hard
        }
    }
}

/// Noiseless regression target on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetFunction {
    /// `sum_k coeffs[k] x^k`.
    Polynomial { coeffs: Vec<f64> },
    /// Constant on the easy region, a parabola on the medium region and a
    /// truncated sawtooth series `amplitude * sum_{k<=harmonics} sin(k w u) / k`
    /// on the hard region, with `u` measured from the hard boundary. The
    /// pieces join continuously.
    Piecewise { easy_level: f64, medium_curvature: f64, hard_amplitude: f64, hard_frequency: f64, hard_harmonics: usize },
}

impl Default for TargetFunction {
    fn default() -> Self {
        TargetFunction::Piecewise {
            easy_level: 0.0,
            medium_curvature: 1.0,
            hard_amplitude: 0.5,
            hard_frequency: 4.0,
            hard_harmonics: 5,
        }
    }
}

impl TargetFunction {
    pub fn eval(&self, x: f64, bounds: &RegionBounds) -> f64 {
        match self {
            TargetFunction::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c),
            TargetFunction::Piecewise { easy_level, medium_curvature, hard_amplitude, hard_frequency, hard_harmonics } => {
                let (a, b) = (bounds.easy_end, bounds.hard_start);
                match bounds.region_of(x) {
                    Region::Easy => *easy_level,
                    Region::Medium => easy_level + medium_curvature * (x - a).powi(2),
                    Region::Hard => {
                        let u = x - b;
                        let series: f64 = (1..=*hard_harmonics)
                            .map(|k| (k as f64 * hard_frequency * u).sin() / k as f64)
                            .sum();
                        easy_level + medium_curvature * (b - a).powi(2) + hard_amplitude * series
                    }
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = match self {
            TargetFunction::Polynomial { coeffs } => coeffs.iter().all(|c| c.is_finite()),
            TargetFunction::Piecewise { easy_level, medium_curvature, hard_amplitude, hard_frequency, .. } => {
                [easy_level, medium_curvature, hard_amplitude, hard_frequency].iter().all(|v| v.is_finite())
            }
        };
        if finite {
            Ok(())
        } else {
            Err(Error::config("target parameters must be finite"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasVarConfig {
    pub target: TargetFunction,
    /// Standard deviation of the additive Gaussian observation noise.
    pub noise_sd: f64,
    pub regions: RegionBounds,
    /// Polynomial degrees, strictly increasing. The default uses even
    /// degrees only: on the symmetric domain odd and even Legendre terms
    /// alternate in which part of the target they reduce.
    pub degrees: Vec<usize>,
    /// Monte Carlo training-set count M.
    pub replicates: usize,
    /// Training-set size n.
    pub train_size: usize,
    /// Training samples in `weighted_region` get weight `1 + epsilon`.
    pub epsilon: f64,
    pub weighted_region: Region,
    pub eval_points: usize,
    pub seed: u64,
}

impl Default for BiasVarConfig {
    fn default() -> Self {
        BiasVarConfig {
            target: TargetFunction::default(),
            noise_sd: 0.5,
            regions: RegionBounds::default(),
            degrees: (0..=20).step_by(2).collect(),
            replicates: 100,
            train_size: 400,
            epsilon: 0.0,
            weighted_region: Region::Hard,
            eval_points: 401,
            seed: 0,
        }
    }
}

impl BiasVarConfig {
    pub fn validate(&self) -> Result<()> {
        self.target.validate()?;
        self.regions.validate()?;
        if !self.noise_sd.is_finite() || self.noise_sd < 0.0 {
            return Err(Error::config("noise_sd must be finite and >= 0"));
        }
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(Error::config("epsilon must be finite and >= 0"));
        }
        if self.degrees.is_empty() {
            return Err(Error::config("degree grid is empty"));
        }
        if self.degrees.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("degrees must be strictly increasing"));
        }
        if self.replicates < MIN_REPLICATES {
            return Err(Error::config(format!("need at least {MIN_REPLICATES} replicates")));
        }
        if self.train_size == 0 {
            return Err(Error::config("train_size must be positive"));
        }
        if self.eval_points < 3 {
            return Err(Error::config("eval_points must be at least 3"));
        }
        Ok(())
    }

    /// Same configuration with `1 + epsilon` weights on `region`.
    pub fn weighted(&self, region: Region, epsilon: f64) -> Self {
        BiasVarConfig { epsilon, weighted_region: region, ..self.clone() }
    }

    /// Per-region multipliers implied by `epsilon` and `weighted_region`.
    pub fn region_weights(&self) -> [f64; 3] {
        let mut w = [1.0; 3];
        w[self.weighted_region.index()] += self.epsilon;
        w
    }

    fn same_except_weighting(&self, other: &Self) -> bool {
        let neutral = |c: &Self| BiasVarConfig { epsilon: 0.0, weighted_region: Region::Hard, ..c.clone() };
        neutral(self) == neutral(other)
    }
}

/// Squared bias, variance and mean squared error averaged over some set of
/// evaluation points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Terms {
    pub bias: f64,
    pub variance: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeRow {
    pub degree: usize,
    pub global: Terms,
    pub easy: Terms,
    pub medium: Terms,
    pub hard: Terms,
}

impl DegreeRow {
    pub fn region(&self, r: Region) -> &Terms {
        match r {
            Region::Easy => &self.easy,
            Region::Medium => &self.medium,
            Region::Hard => &self.hard,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionProportions {
    pub easy: f64,
    pub medium: f64,
    pub hard: f64,
}

impl RegionProportions {
    pub fn get(&self, r: Region) -> f64 {
        match r {
            Region::Easy => self.easy,
            Region::Medium => self.medium,
            Region::Hard => self.hard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasVarReport {
    pub config: BiasVarConfig,
    pub proportions: RegionProportions,
    pub rows: Vec<DegreeRow>,
    /// Degrees whose normal equations were singular in some replicate.
    pub skipped: Vec<usize>,
    pub c_star: usize,
    pub c_star_easy: usize,
    pub c_star_medium: usize,
    pub c_star_hard: usize,
    /// Argmin of the region-weighted error `sum_r p_r (1 + eps_r) Err_r`.
    pub c_star_new: usize,
}

impl BiasVarReport {
    pub fn row(&self, degree: usize) -> Option<&DegreeRow> {
        self.rows.iter().find(|r| r.degree == degree)
    }
}

/// Legendre polynomials `P_0..=P_max` at `x`.
fn legendre_into(x: f64, max: usize, out: &mut [f64]) {
    out[0] = 1.0;
    if max >= 1 {
        out[1] = x;
    }
    for k in 2..=max {
        let kf = k as f64;
        out[k] = ((2.0 * kf - 1.0) * x * out[k - 1] - (kf - 1.0) * out[k - 2]) / kf;
    }
}

/// Sum by recursive halving.
fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        xs.iter().sum()
    } else {
        let (l, r) = xs.split_at(xs.len() / 2);
        pairwise_sum(l) + pairwise_sum(r)
    }
}

/// Smallest degree attaining the minimum.
fn argmin(degrees: &[usize], values: impl Iterator<Item = f64>) -> usize {
    let mut best = (degrees[0], f64::INFINITY);
    for (&d, v) in degrees.iter().zip(values) {
        if v < best.1 {
            best = (d, v);
        }
    }
    best.0
}

/// Grid predictions per fitted degree, `None` where the fit was singular.
type ReplicateFits = Vec<Option<Vec<f64>>>;

fn fit_replicate(cfg: &BiasVarConfig, m: usize, degrees: &[usize], grid_basis: &DMatrix<f64>) -> ReplicateFits {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, m as u64));
    let n = cfg.train_size;
    let max = *degrees.last().expect("nonempty");
    let cols = max + 1;
    let weights = cfg.region_weights();

    let mut basis = DMatrix::<f64>::zeros(n, cols);
    let mut rhs = DVector::<f64>::zeros(n);
    let mut row = vec![0.0; cols];
    for i in 0..n {
        let x: f64 = rng.random_range(-1.0..1.0);
        let noise: f64 = rng.sample(StandardNormal);
        let y = cfg.target.eval(x, &cfg.regions) + cfg.noise_sd * noise;
        let sw = weights[cfg.regions.region_of(x).index()].sqrt();
        legendre_into(x, max, &mut row);
        for (k, v) in row.iter().enumerate() {
            basis[(i, k)] = sw * v;
        }
        rhs[i] = sw * y;
    }
    // Nested models share the leading block of one Gram matrix.
    let gram = basis.tr_mul(&basis);
    let moment = basis.tr_mul(&rhs);

    degrees
        .iter()
        .map(|&d| {
            let k = d + 1;
            if k > n {
                return None;
            }
            let chol = gram.view((0, 0), (k, k)).into_owned().cholesky()?;
            let diag = chol.l_dirty().diagonal();
            let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v * v), hi.max(v * v)));
            if !(lo > SINGULAR_RCOND * hi) {
                return None;
            }
            let coef = chol.solve(&moment.rows(0, k).into_owned());
            let pred = grid_basis.columns(0, k) * coef;
            Some(pred.iter().copied().collect())
        })
        .collect()
}

/// Runs the Monte Carlo study described by `cfg`.
pub fn run_biasvar(cfg: &BiasVarConfig) -> Result<BiasVarReport> {
    cfg.validate()?;
    let g = cfg.eval_points;
    let grid: Vec<f64> = (0..g).map(|j| -1.0 + 2.0 * j as f64 / (g - 1) as f64).collect();
    let truth: Vec<f64> = grid.iter().map(|&x| cfg.target.eval(x, &cfg.regions)).collect();
    let region_idx: Vec<usize> = grid.iter().map(|&x| cfg.regions.region_of(x).index()).collect();
    let mut counts = [0usize; 3];
    for &r in &region_idx {
        counts[r] += 1;
    }
    let proportions = RegionProportions {
        easy: counts[0] as f64 / g as f64,
        medium: counts[1] as f64 / g as f64,
        hard: counts[2] as f64 / g as f64,
    };

    let max = *cfg.degrees.last().expect("validated");
    let mut grid_basis = DMatrix::<f64>::zeros(g, max + 1);
    let mut row = vec![0.0; max + 1];
    for (j, &x) in grid.iter().enumerate() {
        legendre_into(x, max, &mut row);
        for (k, v) in row.iter().enumerate() {
            grid_basis[(j, k)] = *v;
        }
    }

    let fits: Vec<ReplicateFits> =
        (0..cfg.replicates).into_par_iter().map(|m| fit_replicate(cfg, m, &cfg.degrees, &grid_basis)).collect();

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let mut column = vec![0.0; cfg.replicates];
    for (di, &degree) in cfg.degrees.iter().enumerate() {
        if fits.iter().any(|f| f[di].is_none()) {
            skipped.push(degree);
            continue;
        }
        let mut bias = vec![0.0; g];
        let mut var = vec![0.0; g];
        let mut err = vec![0.0; g];
        let m = cfg.replicates as f64;
        for j in 0..g {
            for (slot, f) in column.iter_mut().zip(&fits) {
                *slot = f[di].as_ref().expect("checked")[j];
            }
            let mean = pairwise_sum(&column) / m;
            bias[j] = (mean - truth[j]).powi(2);
            let sq: Vec<f64> = column.iter().map(|p| (p - mean).powi(2)).collect();
            var[j] = pairwise_sum(&sq) / m;
            let se: Vec<f64> = column.iter().map(|p| (p - truth[j]).powi(2)).collect();
            err[j] = pairwise_sum(&se) / m;
        }
        let average = |mask: Option<usize>| {
            let pick = |v: &[f64]| {
                let sel: Vec<f64> =
                    v.iter().zip(&region_idx).filter(|(_, r)| mask.is_none_or(|m| **r == m)).map(|(x, _)| *x).collect();
                if sel.is_empty() {
                    0.0
                } else {
                    pairwise_sum(&sel) / sel.len() as f64
                }
            };
            Terms { bias: pick(&bias), variance: pick(&var), error: pick(&err) }
        };
        rows.push(DegreeRow {
            degree,
            global: average(None),
            easy: average(Some(0)),
            medium: average(Some(1)),
            hard: average(Some(2)),
        });
    }
    if rows.is_empty() {
        return Err(Error::Singular("every degree in the grid was singular".into()));
    }

    let degrees: Vec<usize> = rows.iter().map(|r| r.degree).collect();
    let w = cfg.region_weights();
    let weighted_error = |r: &DegreeRow| {
        Region::ALL.iter().map(|&reg| proportions.get(reg) * w[reg.index()] * r.region(reg).error).sum::<f64>()
    };
    Ok(BiasVarReport {
        c_star: argmin(&degrees, rows.iter().map(|r| r.global.error)),
        c_star_easy: argmin(&degrees, rows.iter().map(|r| r.easy.error)),
        c_star_medium: argmin(&degrees, rows.iter().map(|r| r.medium.error)),
        c_star_hard: argmin(&degrees, rows.iter().map(|r| r.hard.error)),
        c_star_new: argmin(&degrees, rows.iter().map(weighted_error)),
        config: cfg.clone(),
        proportions,
        rows,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMonotonicity {
    pub region: Region,
    pub bias_decreasing: bool,
    pub variance_increasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionVerdict {
    pub regions: Vec<RegionMonotonicity>,
    /// Bias falls and variance rises with degree in every region.
    pub assumption1: bool,
    pub global_variance_increasing: bool,
    pub c_star_easy: usize,
    pub c_star: usize,
    pub c_star_hard: usize,
    /// `c_star_easy < c_star < c_star_hard`.
    pub assumption2: bool,
}

fn slack(xs: &[f64]) -> f64 {
    let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    MONOTONE_REL_TOL * (hi - lo) + MONOTONE_ABS_TOL
}

fn nonincreasing(xs: &[f64]) -> bool {
    let tol = slack(xs);
    xs.windows(2).all(|w| w[1] <= w[0] + tol)
}

fn nondecreasing(xs: &[f64]) -> bool {
    let tol = slack(xs);
    xs.windows(2).all(|w| w[1] >= w[0] - tol)
}

/// Checks both regularity assumptions on a finished report. Failures are
/// reported in the verdict, not as errors.
pub fn check_assumptions(report: &BiasVarReport) -> Result<AssumptionVerdict> {
    if report.rows.len() < 4 {
        return Err(Error::domain("assumption checks need at least four fitted degrees"));
    }
    let series = |f: &dyn Fn(&DegreeRow) -> f64| report.rows.iter().map(f).collect::<Vec<f64>>();
    let regions: Vec<RegionMonotonicity> = Region::ALL
        .iter()
        .map(|&r| RegionMonotonicity {
            region: r,
            bias_decreasing: nonincreasing(&series(&|row| row.region(r).bias)),
            variance_increasing: nondecreasing(&series(&|row| row.region(r).variance)),
        })
        .collect();
    let assumption1 = regions.iter().all(|m| m.bias_decreasing && m.variance_increasing);
    Ok(AssumptionVerdict {
        assumption1,
        global_variance_increasing: nondecreasing(&series(&|row| row.global.variance)),
        regions,
        c_star_easy: report.c_star_easy,
        c_star: report.c_star,
        c_star_hard: report.c_star_hard,
        assumption2: report.c_star_easy < report.c_star && report.c_star < report.c_star_hard,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Extra weight on the hard region should not lower the optimal degree.
    Hard,
    /// Extra weight on the easy region should not raise it.
    Easy,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(Direction::Hard),
            "easy" => Ok(Direction::Easy),
            other => Err(Error::config(format!("unknown direction `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropositionCheck {
    pub holds: bool,
    /// `c_star_new(weighted) - c_star(base)`.
    pub margin: i64,
}

/// Compares the reweighted optimum against the unweighted one.
pub fn check_proposition(base: &BiasVarReport, weighted: &BiasVarReport, direction: Direction) -> Result<PropositionCheck> {
    if !base.config.same_except_weighting(&weighted.config) {
        return Err(Error::config("reports differ in more than epsilon and weighted region"));
    }
    let expected = match direction {
        Direction::Hard => Region::Hard,
        Direction::Easy => Region::Easy,
    };
    if weighted.config.epsilon > 0.0 && weighted.config.weighted_region != expected {
        return Err(Error::config(format!(
            "direction {direction:?} needs weights on the {} region, got {}",
            expected.as_str(),
            weighted.config.weighted_region.as_str()
        )));
    }
    let margin = weighted.c_star_new as i64 - base.c_star as i64;
    let holds = match direction {
        Direction::Hard => margin >= 0,
        Direction::Easy => margin <= 0,
    };
    Ok(PropositionCheck { holds, margin })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(target: TargetFunction, noise_sd: f64, degrees: Vec<usize>) -> BiasVarConfig {
        BiasVarConfig {
            target,
            noise_sd,
            degrees,
            replicates: 50,
            train_size: 40,
            eval_points: 101,
            ..BiasVarConfig::default()
        }
    }

    #[test]
    fn legendre_matches_closed_forms() {
        let mut out = [0.0; 4];
        for &x in &[-0.7, 0.0, 0.3, 1.0] {
            legendre_into(x, 3, &mut out);
            assert!((out[2] - 0.5 * (3.0 * x * x - 1.0)).abs() < 1e-14);
            assert!((out[3] - 0.5 * (5.0 * x * x * x - 3.0 * x)).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_target_is_exact_from_degree_one() {
        let cfg = small(TargetFunction::Polynomial { coeffs: vec![0.3, -1.2] }, 0.0, (0..=5).collect());
        let r = run_biasvar(&cfg).unwrap();
        for row in &r.rows[1..] {
            assert!(row.global.bias < 1e-10, "degree {} bias {}", row.degree, row.global.bias);
        }
        assert!(r.rows[0].global.bias > 0.1);
        assert_eq!(r.c_star, 1);
    }

    #[test]
    fn zero_epsilon_reproduces_c_star() {
        let cfg = small(TargetFunction::default(), 0.5, (0..=8).collect());
        let r = run_biasvar(&cfg).unwrap();
        assert_eq!(r.c_star_new, r.c_star);
        let check = check_proposition(&r, &r, Direction::Hard).unwrap();
        assert_eq!(check.margin, 0);
        assert!(check.holds);
    }

    #[test]
    fn degrees_at_or_above_sample_count_are_skipped() {
        let mut cfg = small(TargetFunction::Polynomial { coeffs: vec![1.0] }, 0.1, vec![0, 1, 2, 5, 9]);
        cfg.train_size = 5;
        let r = run_biasvar(&cfg).unwrap();
        assert_eq!(r.skipped, vec![5, 9]);
        assert_eq!(r.rows.len(), 3);
    }

    #[test]
    fn flat_target_fails_strict_ordering() {
        let cfg = small(TargetFunction::Polynomial { coeffs: vec![0.7] }, 0.3, (0..=6).collect());
        let r = run_biasvar(&cfg).unwrap();
        let v = check_assumptions(&r).unwrap();
        assert_eq!((v.c_star_easy, v.c_star, v.c_star_hard), (0, 0, 0));
        assert!(!v.assumption2);
        assert!(v.global_variance_increasing);
    }

    #[test]
    fn error_splits_into_bias_and_variance() {
        let cfg = small(TargetFunction::default(), 0.5, (0..=6).collect());
        let r = run_biasvar(&cfg).unwrap();
        for row in &r.rows {
            for t in [row.global, row.easy, row.medium, row.hard] {
                assert!(t.bias >= 0.0 && t.variance >= 0.0);
                assert!((t.error - t.bias - t.variance).abs() <= 1e-9 * t.error.max(1.0));
            }
        }
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let base = BiasVarConfig::default();
        let bad = [
            BiasVarConfig { replicates: 49, ..base.clone() },
            BiasVarConfig { degrees: vec![0, 2, 2], ..base.clone() },
            BiasVarConfig { degrees: vec![], ..base.clone() },
            BiasVarConfig { epsilon: -1.0, ..base.clone() },
            BiasVarConfig { regions: RegionBounds { easy_end: 0.5, hard_start: 0.1 }, ..base.clone() },
        ];
        for cfg in bad {
            assert!(matches!(run_biasvar(&cfg), Err(Error::Config(_))), "{cfg:?}");
        }
    }

    #[test]
    fn mismatched_reports_are_rejected() {
        let cfg = small(TargetFunction::default(), 0.5, (0..=4).collect());
        let a = run_biasvar(&cfg).unwrap();
        let b = run_biasvar(&BiasVarConfig { noise_sd: 0.4, ..cfg.clone() }).unwrap();
        assert!(check_proposition(&a, &b, Direction::Hard).is_err());
        let easy = run_biasvar(&cfg.weighted(Region::Easy, 1.0)).unwrap();
        assert!(check_proposition(&a, &easy, Direction::Hard).is_err());
        assert!(check_proposition(&a, &easy, Direction::Easy).is_ok());
    }
}
