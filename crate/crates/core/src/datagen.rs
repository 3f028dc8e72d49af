//! Deterministic synthetic scenarios: clean, label-noisy, long-tailed and
//! difficulty-skewed Gaussian mixtures.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Features, labels and optional clean-label bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub dims: usize,
    pub num_classes: usize,
    /// Row-major `len x dims`.
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    /// Present only after label noise was injected.
    pub clean_labels: Option<Vec<usize>>,
}

impl LabeledDataset {
    pub fn new(dims: usize, num_classes: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if dims == 0 {
            return Err(Error::domain("dims must be >= 1"));
        }
        if features.len() != labels.len() * dims {
            return Err(Error::LengthMismatch { left: features.len(), right: labels.len() * dims });
        }
        if let Some(l) = labels.iter().find(|l| **l >= num_classes) {
            return Err(Error::domain(format!("label {l} out of range for {num_classes} classes")));
        }
        Ok(LabeledDataset { dims, num_classes, features, labels, clean_labels: None })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dims..(i + 1) * self.dims]
    }

    /// Per-class sample counts `N_c` of the observed labels.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// `r_c = N_c / N`.
    pub fn class_freqs(&self) -> Vec<f64> {
        let n = self.len() as f64;
        self.class_counts().into_iter().map(|c| c as f64 / n).collect()
    }

    /// Whether sample `i` carries a corrupted label.
    pub fn is_noisy(&self, i: usize) -> bool {
        self.clean_labels.as_ref().is_some_and(|c| c[i] != self.labels[i])
    }

    /// Rows `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        let mut features = Vec::with_capacity(idx.len() * self.dims);
        for &i in idx {
            features.extend_from_slice(self.row(i));
        }
        LabeledDataset {
            dims: self.dims,
            num_classes: self.num_classes,
            features,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            clean_labels: self.clean_labels.as_ref().map(|c| idx.iter().map(|&i| c[i]).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub classes: usize,
    pub dims: usize,
    pub per_class: usize,
    /// Scale of the class-mean layout; see [`class_means`].
    pub separation: f64,
    /// Within-class standard deviation.
    pub spread: f64,
    pub seed: u64,
}

/// A generated dataset and its stratified 80/20 split.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub data: LabeledDataset,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

impl Generated {
    pub fn train(&self) -> LabeledDataset {
        self.data.subset(&self.train_idx)
    }

    pub fn test(&self) -> LabeledDataset {
        self.data.subset(&self.test_idx)
    }
}

/// Class means. With `dims >= classes` they are simplex vertices
/// `separation / sqrt(2) * e_c`, so every pair sits `separation` apart.
/// Otherwise they lie on a circle of radius `separation` in the first two
/// coordinates, or on a line when `dims == 1`.
pub fn class_means(classes: usize, dims: usize, separation: f64) -> Vec<Vec<f64>> {
    (0..classes)
        .map(|c| {
            let mut m = vec![0.0; dims];
            if dims >= classes {
                m[c] = separation / std::f64::consts::SQRT_2;
            } else if dims == 1 {
                m[0] = separation * c as f64;
            } else {
                let angle = std::f64::consts::TAU * c as f64 / classes as f64;
                m[0] = separation * angle.cos();
                m[1] = separation * angle.sin();
            }
            m
        })
        .collect()
}

/// Isotropic Gaussian classes around [`class_means`].
pub fn make_gaussian_mixture(spec: &MixtureSpec) -> Result<Generated> {
    if spec.classes < 2 {
        return Err(Error::domain("need at least two classes"));
    }
    if spec.per_class < 2 {
        return Err(Error::domain("need at least two samples per class"));
    }
    if spec.dims < 1 {
        return Err(Error::domain("dims must be >= 1"));
    }
    if !spec.separation.is_finite() || spec.separation < 0.0 {
        return Err(Error::domain("separation must be finite and nonnegative"));
    }
    if !spec.spread.is_finite() || spec.spread <= 0.0 {
        return Err(Error::domain("spread must be finite and positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let means = class_means(spec.classes, spec.dims, spec.separation);
    let n = spec.classes * spec.per_class;
    let mut features = Vec::with_capacity(n * spec.dims);
    let mut labels = Vec::with_capacity(n);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..spec.per_class {
            for m in mean {
                let z: f64 = rng.sample(StandardNormal);
                features.push(m + spec.spread * z);
            }
            labels.push(c);
        }
    }
    let data = LabeledDataset::new(spec.dims, spec.classes, features, labels)?;

    let n_test = ((spec.per_class as f64) * 0.2).floor().max(1.0) as usize;
    let mut train_idx = Vec::with_capacity(n);
    let mut test_idx = Vec::with_capacity(spec.classes * n_test);
    for c in 0..spec.classes {
        let mut idx: Vec<usize> = (c * spec.per_class..(c + 1) * spec.per_class).collect();
        idx.shuffle(&mut rng);
        test_idx.extend_from_slice(&idx[..n_test]);
        train_idx.extend_from_slice(&idx[n_test..]);
    }
    // Interleave classes so contiguous slices are not class-sorted.
    train_idx.shuffle(&mut rng);
    test_idx.sort_unstable();
    Ok(Generated { data, train_idx, test_idx })
}

/// How many samples of each class to corrupt so that the total is
/// `floor(rate * N)` and every class is within one sample of `rate * N_c`.
fn stratified_quota(counts: &[usize], rate: f64) -> Vec<usize> {
    let n: usize = counts.iter().sum();
    let total = (rate * n as f64).floor() as usize;
    let exact: Vec<f64> = counts.iter().map(|c| rate * *c as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut left = total.saturating_sub(quota.iter().sum());
    for c in order {
        if left == 0 {
            break;
        }
        if quota[c] < counts[c] {
            quota[c] += 1;
            left -= 1;
        }
    }
    quota
}

fn check_noise_input(data: &LabeledDataset, rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::domain(format!("noise rate {rate} outside [0,1)")));
    }
    if data.clean_labels.is_some() {
        return Err(Error::domain("dataset already carries injected noise"));
    }
    Ok(())
}

/// Indices to corrupt, chosen uniformly within each class.
fn pick_noisy(data: &LabeledDataset, rate: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let quota = stratified_quota(&data.class_counts(), rate);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.num_classes];
    for (i, &l) in data.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut picked = Vec::new();
    for (c, members) in by_class.iter_mut().enumerate() {
        members.shuffle(rng);
        picked.extend_from_slice(&members[..quota[c]]);
    }
    picked.sort_unstable();
    picked
}

/// Flips a `rate` fraction of labels from `c` to `(c + 1) mod C`.
pub fn apply_flip_noise(data: &LabeledDataset, rate: f64, seed: u64) -> Result<LabeledDataset> {
    check_noise_input(data, rate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = data.clone();
    out.clean_labels = Some(data.labels.clone());
    for i in pick_noisy(data, rate, &mut rng) {
        out.labels[i] = (data.labels[i] + 1) % data.num_classes;
    }
    Ok(out)
}

/// Replaces a `rate` fraction of labels with a uniformly drawn other class.
pub fn apply_uniform_noise(data: &LabeledDataset, rate: f64, seed: u64) -> Result<LabeledDataset> {
    check_noise_input(data, rate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = data.clone();
    out.clean_labels = Some(data.labels.clone());
    for i in pick_noisy(data, rate, &mut rng) {
        let shift = rng.random_range(1..data.num_classes);
        out.labels[i] = (data.labels[i] + shift) % data.num_classes;
    }
    Ok(out)
}

/// Number of samples class `c` keeps: `floor(n_max * mu^c)` with
/// `mu = (1 / IF)^(1 / (C - 1))`, and never fewer than one.
pub fn longtail_counts(n_max: usize, classes: usize, imbalance_factor: f64) -> Result<Vec<usize>> {
    if !imbalance_factor.is_finite() || imbalance_factor < 1.0 {
        return Err(Error::domain(format!("imbalance factor {imbalance_factor} must be >= 1")));
    }
    if n_max as f64 / imbalance_factor < 1.0 {
        return Err(Error::domain(format!(
            "tail class would keep {} < 1 samples",
            n_max as f64 / imbalance_factor
        )));
    }
    if classes < 2 {
        return Ok(vec![n_max; classes]);
    }
    let mu = (1.0 / imbalance_factor).powf(1.0 / (classes - 1) as f64);
    Ok((0..classes)
        .map(|c| {
            let exact = n_max as f64 * mu.powi(c as i32);
            // Absorb rounding noise so that e.g. 500/100 keeps exactly 5.
            ((exact + 1e-9).floor() as usize).clamp(1, n_max)
        })
        .collect())
}

/// Subsamples a balanced dataset to an exponential long tail; the first
/// samples of each class (in dataset order) are kept.
pub fn make_longtail(data: &LabeledDataset, imbalance_factor: f64) -> Result<LabeledDataset> {
    let counts = data.class_counts();
    let n_max = *counts.iter().max().ok_or(Error::Empty("dataset"))?;
    if counts.iter().any(|c| *c != n_max) {
        return Err(Error::domain("long-tail construction needs a balanced input"));
    }
    let keep = longtail_counts(n_max, data.num_classes, imbalance_factor)?;
    let mut taken = vec![0usize; data.num_classes];
    let idx: Vec<usize> = (0..data.len())
        .filter(|&i| {
            let c = data.labels[i];
            taken[c] += 1;
            taken[c] <= keep[c]
        })
        .collect();
    Ok(data.subset(&idx))
}

/// Which part of the loss-sorted data a skewed subset keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkewKind {
    /// Lowest losses.
    E,
    /// 7/8 highest losses plus 1/8 drawn from the rest.
    H,
    /// Around the median loss.
    M,
    /// Half lowest, half highest.
    B,
}

impl std::str::FromStr for SkewKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "e" => Ok(SkewKind::E),
            "h" => Ok(SkewKind::H),
            "m" => Ok(SkewKind::M),
            "b" => Ok(SkewKind::B),
            other => Err(Error::config(format!("unknown skew kind `{other}`"))),
        }
    }
}

/// Indices of the skewed subset given per-sample probe losses.
pub fn select_by_loss(losses: &[f64], kind: SkewKind, keep_n: usize, seed: u64) -> Result<Vec<usize>> {
    let n = losses.len();
    if keep_n > n {
        return Err(Error::domain(format!("keep_n {keep_n} exceeds {n} available samples")));
    }
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::domain("probe losses must be finite"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]).then(a.cmp(&b)));
    let mut picked = match kind {
        SkewKind::E => order[..keep_n].to_vec(),
        SkewKind::M => {
            let start = (n - keep_n) / 2;
            order[start..start + keep_n].to_vec()
        }
        SkewKind::B => {
            let low = keep_n / 2;
            let high = keep_n - low;
            let mut v = order[..low].to_vec();
            v.extend_from_slice(&order[n - high..]);
            v
        }
        SkewKind::H => {
            let hard = keep_n * 7 / 8;
            let mut v = order[n - hard..].to_vec();
            let mut rest = order[..n - hard].to_vec();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rest.shuffle(&mut rng);
            v.extend_from_slice(&rest[..keep_n - hard]);
            v
        }
    };
    picked.sort_unstable();
    Ok(picked)
}

/// Keeps a loss-skewed subset; `probe` supplies per-sample losses.
pub fn make_difficulty_skewed<F>(
    data: &LabeledDataset,
    kind: SkewKind,
    keep_n: usize,
    seed: u64,
    probe: F,
) -> Result<LabeledDataset>
where
    F: FnOnce(&LabeledDataset) -> Result<Vec<f64>>,
{
    if keep_n > data.len() {
        return Err(Error::domain(format!(
            "keep_n {keep_n} exceeds {} available samples",
            data.len()
        )));
    }
    let losses = probe(data)?;
    if losses.len() != data.len() {
        return Err(Error::LengthMismatch { left: losses.len(), right: data.len() });
    }
    Ok(data.subset(&select_by_loss(&losses, kind, keep_n, seed)?))
}

/// Label or sampling modification applied to the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Modifier {
    None,
    FlipNoise { rate: f64 },
    UniformNoise { rate: f64 },
    LongTail { imbalance_factor: f64 },
    DifficultySkew { skew: SkewKind, keep_n: usize, probe_epochs: usize },
}

impl Modifier {
    pub fn validate(&self) -> Result<()> {
        match self {
            Modifier::None => Ok(()),
            Modifier::FlipNoise { rate } | Modifier::UniformNoise { rate } => {
                if (0.0..1.0).contains(rate) {
                    Ok(())
                } else {
                    Err(Error::config(format!("noise rate {rate} outside [0,1)")))
                }
            }
            Modifier::LongTail { imbalance_factor } => {
                if *imbalance_factor >= 1.0 {
                    Ok(())
                } else {
                    Err(Error::config(format!("imbalance factor {imbalance_factor} must be >= 1")))
                }
            }
            Modifier::DifficultySkew { keep_n, probe_epochs, .. } => {
                if *keep_n == 0 {
                    return Err(Error::config("keep_n must be >= 1"));
                }
                if *probe_epochs == 0 {
                    return Err(Error::config("probe_epochs must be >= 1"));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub base: MixtureSpec,
    pub modifier: Modifier,
}

/// Training and test sets of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(seed: u64) -> MixtureSpec {
        MixtureSpec { classes: 10, dims: 4, per_class: 100, separation: 3.0, spread: 1.0, seed }
    }

    #[test]
    fn mixture_is_deterministic_and_split() {
        let a = make_gaussian_mixture(&spec(3)).unwrap();
        let b = make_gaussian_mixture(&spec(3)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.data.features, make_gaussian_mixture(&spec(4)).unwrap().data.features);
        assert_eq!(a.test_idx.len(), 200);
        assert_eq!(a.train_idx.len(), 800);
        assert!(a.test().class_counts().iter().all(|c| *c == 20));
        let mut all: Vec<usize> = a.train_idx.iter().chain(&a.test_idx).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
    }

    #[test]
    fn mixture_rejects_bad_specs() {
        let mut s = spec(0);
        s.dims = 0;
        assert!(make_gaussian_mixture(&s).is_err());
        let mut s = spec(0);
        s.spread = 0.0;
        assert!(make_gaussian_mixture(&s).is_err());
        let mut s = spec(0);
        s.classes = 1;
        assert!(make_gaussian_mixture(&s).is_err());
    }

    #[test]
    fn flip_noise_counts() {
        let data = make_gaussian_mixture(&spec(1)).unwrap().data;
        let same = apply_flip_noise(&data, 0.0, 9).unwrap();
        assert_eq!(same.labels, data.labels);
        assert_eq!(same.clean_labels.as_ref().unwrap(), &data.labels);

        let noisy = apply_flip_noise(&data, 0.4, 9).unwrap();
        let flipped: Vec<usize> = (0..data.len()).filter(|&i| noisy.is_noisy(i)).collect();
        assert_eq!(flipped.len(), 400);
        for &i in &flipped {
            assert_eq!(noisy.labels[i], (data.labels[i] + 1) % 10);
        }
        assert_eq!(noisy.features, data.features);
        assert!(apply_flip_noise(&noisy, 0.1, 1).is_err());
        assert!(apply_flip_noise(&data, 1.0, 1).is_err());
    }

    #[test]
    fn uniform_noise_never_keeps_the_label() {
        let data = make_gaussian_mixture(&spec(2)).unwrap().data;
        let noisy = apply_uniform_noise(&data, 0.3, 5).unwrap();
        let clean = noisy.clean_labels.as_ref().unwrap();
        let changed = (0..data.len()).filter(|&i| noisy.labels[i] != clean[i]).count();
        assert_eq!(changed, 300);
        assert_eq!(clean, &data.labels);
    }

    #[test]
    fn quota_rounding() {
        assert_eq!(stratified_quota(&[3, 3, 3], 0.5), vec![2, 1, 1]);
        assert_eq!(stratified_quota(&[10, 10], 0.0), vec![0, 0]);
        let q = stratified_quota(&[1000; 10], 0.4);
        assert!(q.iter().all(|v| *v == 400));
    }

    #[test]
    fn longtail_examples() {
        assert_eq!(longtail_counts(500, 10, 1.0).unwrap(), vec![500; 10]);
        let c = longtail_counts(500, 10, 100.0).unwrap();
        assert_eq!(c[0], 500);
        assert_eq!(c[9], 5);
        // Geometric interpolation recomputed in closed form.
        for (k, &got) in c.iter().enumerate() {
            let exact = 500.0 * 100f64.powf(-(k as f64) / 9.0);
            assert!((got as f64 - exact).abs() < 1.0, "class {k}: {got} vs {exact}");
        }
        assert!(longtail_counts(50, 10, 100.0).is_err());
        assert!(longtail_counts(50, 10, 0.5).is_err());
    }

    #[test]
    fn make_longtail_keeps_samples_intact() {
        let data = make_gaussian_mixture(&spec(5)).unwrap().data;
        let lt = make_longtail(&data, 10.0).unwrap();
        let counts = lt.class_counts();
        assert_eq!(counts, longtail_counts(100, 10, 10.0).unwrap());
        // Every retained row appears unchanged in the source.
        for i in 0..lt.len() {
            let found = (0..data.len()).any(|j| data.row(j) == lt.row(i) && data.labels[j] == lt.labels[i]);
            assert!(found);
        }
        assert_eq!(make_longtail(&data, 1.0).unwrap(), data);
        assert!(make_longtail(&lt, 2.0).is_err());
    }

    #[test]
    fn skew_selection() {
        let losses: Vec<f64> = (0..16).map(f64::from).collect();
        assert_eq!(select_by_loss(&losses, SkewKind::E, 4, 0).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(select_by_loss(&losses, SkewKind::B, 4, 0).unwrap(), vec![0, 1, 14, 15]);
        assert_eq!(select_by_loss(&losses, SkewKind::M, 4, 0).unwrap(), vec![6, 7, 8, 9]);
        let h = select_by_loss(&losses, SkewKind::H, 8, 0).unwrap();
        assert_eq!(h.len(), 8);
        assert!((9..16).all(|i| h.contains(&i)));
        assert_eq!(select_by_loss(&losses, SkewKind::M, 16, 0).unwrap(), (0..16).collect::<Vec<_>>());
        assert!(select_by_loss(&losses, SkewKind::E, 17, 0).is_err());
    }

    #[test]
    fn skew_b_recipe_proportions() {
        let losses: Vec<f64> = (0..10_000).map(|i| ((i * 7919) % 10_000) as f64).collect();
        let b = select_by_loss(&losses, SkewKind::B, 4000, 1).unwrap();
        let low = b.iter().filter(|&&i| losses[i] < 2000.0).count();
        let high = b.iter().filter(|&&i| losses[i] >= 8000.0).count();
        assert_eq!((low, high), (2000, 2000));
    }
}
