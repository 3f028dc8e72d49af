//! A from-scratch weighted softmax classifier (linear or one hidden ReLU
//! layer) trained by momentum SGD under any weighting schedule.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datagen::{
    apply_flip_noise, apply_uniform_noise, make_difficulty_skewed, make_gaussian_mixture, make_longtail,
    LabeledDataset, Modifier, Scenario, ScenarioSpec,
};
use crate::derive_seed;
use crate::difficulty::{DifficultyProfile, DEFAULT_BINS};
use crate::error::{Error, Result};
use crate::schedule::{mode_at_epoch, ModeSchedule, ScheduleState};
use crate::weighting::{classify_mode, clamp_prob, normalize_weights, PriorityMode, SampleSignal, WeightScheme, WeightVector, PROB_EPS};

/// One fully connected layer, `outputs x inputs` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in self.weights.chunks_exact(self.inputs).enumerate() {
            out[o] = self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }
}

/// Network parameters; the same shape also carries gradients and velocities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub layers: Vec<Dense>,
}

/// `Linear` maps features straight to logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    Linear,
    Mlp { hidden: usize },
}

impl ModelParams {
    pub fn zeros(dims: usize, classes: usize, arch: Architecture) -> Self {
        let layers = match arch {
            Architecture::Linear => vec![Dense::zeros(dims, classes)],
            Architecture::Mlp { hidden } => vec![Dense::zeros(dims, hidden), Dense::zeros(hidden, classes)],
        };
        ModelParams { layers }
    }

    /// He-initialized hidden layer, scaled-normal output layer, zero biases.
    /// A linear model starts at zero.
    pub fn init(dims: usize, classes: usize, arch: Architecture, rng: &mut impl Rng) -> Self {
        let mut m = Self::zeros(dims, classes, arch);
        if let Architecture::Mlp { .. } = arch {
            for (k, layer) in m.layers.iter_mut().enumerate() {
                let gain = if k == 0 { 2.0 } else { 1.0 };
                let sd = (gain / layer.inputs as f64).sqrt();
                for w in &mut layer.weights {
                    let z: f64 = rng.sample(StandardNormal);
                    *w = sd * z;
                }
            }
        }
        m
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            layers: self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    pub fn dims(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn classes(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    /// Hidden width, or `None` for a linear model.
    pub fn complexity(&self) -> Option<usize> {
        (self.layers.len() > 1).then(|| self.layers[0].outputs)
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn scratch(&self) -> Vec<Vec<f64>> {
        self.layers.iter().map(|l| vec![0.0; l.outputs]).collect()
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Runs the network; `acts[k]` receives layer `k`'s output (ReLU applied on
/// hidden layers, softmax on the last).
fn forward_into(model: &ModelParams, x: &[f64], acts: &mut [Vec<f64>]) {
    let last = model.layers.len() - 1;
    for (k, layer) in model.layers.iter().enumerate() {
        let (prev, rest) = acts.split_at_mut(k);
        let input: &[f64] = if k == 0 { x } else { &prev[k - 1] };
        layer.apply(input, &mut rest[0]);
        if k < last {
            for v in rest[0].iter_mut() {
                *v = v.max(0.0);
            }
        } else {
            softmax_in_place(&mut rest[0]);
        }
    }
}

/// Class probabilities for one feature row.
pub fn forward(model: &ModelParams, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != model.dims() {
        return Err(Error::Shape(format!("feature dim {} vs model dim {}", x.len(), model.dims())));
    }
    let mut acts = model.scratch();
    forward_into(model, x, &mut acts);
    let probs = acts.pop().unwrap_or_default();
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(probs)
}

/// Class probabilities for every row of `data`.
pub fn predict_proba(model: &ModelParams, data: &LabeledDataset) -> Result<Vec<Vec<f64>>> {
    (0..data.len()).map(|i| forward(model, data.row(i))).collect()
}

/// `-ln p_label`, with `p` floored at the probability epsilon.
pub fn per_sample_loss(probs: &[f64], label: usize) -> Result<f64> {
    let p = *probs
        .get(label)
        .ok_or_else(|| Error::domain(format!("label {label} out of range")))?;
    Ok(-p.max(PROB_EPS).ln())
}

/// Workspace-backed accumulation of one sample's gradient, scaled by `coef`.
fn accumulate_sample(
    model: &ModelParams,
    x: &[f64],
    label: usize,
    coef: f64,
    acts: &mut [Vec<f64>],
    deltas: &mut [Vec<f64>],
    grads: &mut ModelParams,
) -> Result<()> {
    forward_into(model, x, acts);
    let last = model.layers.len() - 1;
    if acts[last].iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite);
    }
    for (c, d) in deltas[last].iter_mut().enumerate() {
        let target = if c == label { 1.0 } else { 0.0 };
        *d = coef * (acts[last][c] - target);
    }
    for k in (0..=last).rev() {
        let input: &[f64] = if k == 0 { x } else { &acts[k - 1] };
        let layer = &model.layers[k];
        let g = &mut grads.layers[k];
        for o in 0..layer.outputs {
            let d = deltas[k][o];
            if d == 0.0 {
                continue;
            }
            g.bias[o] += d;
            let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
            for (gw, v) in row.iter_mut().zip(input) {
                *gw += d * v;
            }
        }
        if k > 0 {
            let (lower, upper) = deltas.split_at_mut(k);
            let prev = &mut lower[k - 1];
            prev.iter_mut().for_each(|v| *v = 0.0);
            for o in 0..layer.outputs {
                let d = upper[0][o];
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            for (p, a) in prev.iter_mut().zip(&acts[k - 1]) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
        }
    }
    Ok(())
}

/// Gradients of `(1/B) sum_i w_i l_i` over the rows `batch` of `data`.
/// The weights are constants: no gradient flows through them.
pub fn backward_weighted(
    model: &ModelParams,
    data: &LabeledDataset,
    batch: &[usize],
    weights: &WeightVector,
) -> Result<ModelParams> {
    if batch.len() != weights.len() {
        return Err(Error::LengthMismatch { left: batch.len(), right: weights.len() });
    }
    if data.dims != model.dims() {
        return Err(Error::Shape(format!("data dim {} vs model dim {}", data.dims, model.dims())));
    }
    let mut grads = model.zeros_like();
    let mut acts = model.scratch();
    let mut deltas = model.scratch();
    let b = batch.len() as f64;
    for (&i, &w) in batch.iter().zip(weights.as_slice()) {
        if w == 0.0 {
            continue;
        }
        accumulate_sample(model, data.row(i), data.labels[i], w / b, &mut acts, &mut deltas, &mut grads)?;
    }
    Ok(grads)
}

/// Unweighted cross-entropy gradient of a single sample.
pub fn per_sample_gradient(model: &ModelParams, x: &[f64], label: usize) -> Result<ModelParams> {
    let mut grads = model.zeros_like();
    let mut acts = model.scratch();
    let mut deltas = model.scratch();
    accumulate_sample(model, x, label, 1.0, &mut acts, &mut deltas, &mut grads)?;
    Ok(grads)
}

/// Momentum SGD with coupled weight decay:
/// `v <- momentum v + g + decay theta`, `theta <- theta - lr v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    velocity: ModelParams,
}

impl Sgd {
    pub fn new(model: &ModelParams) -> Self {
        Sgd { velocity: model.zeros_like() }
    }

    pub fn velocity(&self) -> &ModelParams {
        &self.velocity
    }

    pub fn step(&mut self, model: &mut ModelParams, grads: &ModelParams, lr: f64, momentum: f64, weight_decay: f64) {
        for ((theta, v), g) in model.values_mut().zip(self.velocity.values_mut()).zip(grads.values()) {
            *v = momentum * *v + g + weight_decay * *theta;
            *theta -= lr * *v;
        }
    }
}

/// Overall and per-class accuracy in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `None` for classes without samples.
    pub per_class: Vec<Option<f64>>,
    pub class_counts: Vec<usize>,
}

pub fn evaluate(model: &ModelParams, data: &LabeledDataset) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut correct = vec![0usize; data.num_classes];
    let counts = data.class_counts();
    let mut acts = model.scratch();
    if data.dims != model.dims() {
        return Err(Error::Shape(format!("data dim {} vs model dim {}", data.dims, model.dims())));
    }
    for i in 0..data.len() {
        forward_into(model, data.row(i), &mut acts);
        let probs = &acts[acts.len() - 1];
        let pred = argmax(probs);
        if pred == data.labels[i] {
            correct[data.labels[i]] += 1;
        }
    }
    let total: usize = correct.iter().sum();
    Ok(Evaluation {
        accuracy: 100.0 * total as f64 / data.len() as f64,
        per_class: correct
            .iter()
            .zip(&counts)
            .map(|(c, n)| (*n > 0).then(|| 100.0 * *c as f64 / *n as f64))
            .collect(),
        class_counts: counts,
    })
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Epochs (1-based) at whose start the rate is multiplied by `lr_drop_factor`.
    pub lr_drops: Vec<usize>,
    pub lr_drop_factor: f64,
    pub seed: u64,
    pub architecture: Architecture,
    pub schedule: ModeSchedule,
    pub track_clean_noisy: bool,
    pub bins: usize,
}

impl TrainConfig {
    /// Momentum 0.9, decay 5e-4, rate 0.1 dropped to a fifth at 30/60/80%
    /// of training, batches of 32, hidden width 64.
    pub fn new(epochs: usize, schedule: ModeSchedule, seed: u64) -> Self {
        TrainConfig {
            epochs,
            batch_size: 32,
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            lr_drops: default_lr_drops(epochs),
            lr_drop_factor: 0.2,
            seed,
            architecture: Architecture::Mlp { hidden: 64 },
            schedule,
            track_clean_noisy: true,
            bins: DEFAULT_BINS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if !(self.lr > 0.0) {
            return Err(Error::config("lr must be > 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must be in [0,1)"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay must be >= 0"));
        }
        if self.lr_drops.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("lr_drops must be strictly increasing"));
        }
        if let Architecture::Mlp { hidden: 0 } = self.architecture {
            return Err(Error::config("hidden width must be >= 1"));
        }
        if self.bins < 2 {
            return Err(Error::config("bins must be >= 2"));
        }
        self.schedule.validate(self.epochs)
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        let drops = self.lr_drops.iter().filter(|&&e| e <= epoch).count();
        self.lr * self.lr_drop_factor.powi(drops as i32)
    }
}

/// 60/120/160-of-200 proportions scaled to `epochs`, deduplicated.
pub fn default_lr_drops(epochs: usize) -> Vec<usize> {
    let mut v: Vec<usize> = [0.3, 0.6, 0.8]
        .iter()
        .map(|f| (f * epochs as f64).round() as usize)
        .filter(|&e| e >= 2 && e <= epochs)
        .collect();
    v.dedup();
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub scheme: WeightScheme,
    /// Mode of the active scheme, when its curve is classifiable.
    pub mode: Option<PriorityMode>,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub per_class_test_accuracy: Vec<Option<f64>>,
    /// Batch-time mean cross-entropy over the epoch.
    pub mean_loss: f64,
    pub mean_loss_clean: Option<f64>,
    pub mean_loss_noisy: Option<f64>,
    /// Mean normalized weight per (observed) class.
    pub mean_weight_per_class: Vec<Option<f64>>,
    pub mean_difficulty: f64,
    /// Smoothed density of the batch-time difficulties.
    pub difficulty_density: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub final_test_accuracy: Option<f64>,
    pub best_test_accuracy: Option<f64>,
    pub best_epoch: Option<usize>,
}

/// Trains on `scenario.train` and evaluates on `scenario.test` every epoch.
pub fn train(scenario: &Scenario, config: &TrainConfig) -> Result<TrainReport> {
    train_model(&scenario.train, Some(&scenario.test), config).map(|(_, r)| r)
}

pub fn train_model(
    data: &LabeledDataset,
    test: Option<&LabeledDataset>,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainReport)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = ModelParams::init(data.dims, data.num_classes, config.architecture, &mut rng);
    let mut opt = Sgd::new(&model);
    let class_counts = data.class_counts();
    let n = data.len();

    let mut order: Vec<usize> = (0..n).collect();
    let mut state = ScheduleState::default();
    let mut latest: Option<DifficultyProfile> = None;
    let mut records = Vec::with_capacity(config.epochs);

    let mut acts = model.scratch();
    let mut deltas = model.scratch();
    let mut difficulties = vec![0.0; n];
    let mut losses = vec![0.0; n];
    let mut weight_sum = vec![0.0; data.num_classes];

    for epoch in 1..=config.epochs {
        let (scheme, next) = mode_at_epoch(&config.schedule, epoch, latest.as_ref(), &state)?;
        state = next;
        let lr = config.lr_at(epoch);
        order.shuffle(&mut rng);
        weight_sum.iter_mut().for_each(|w| *w = 0.0);

        for batch in order.chunks(config.batch_size) {
            let mut raw = Vec::with_capacity(batch.len());
            for &i in batch {
                forward_into(&model, data.row(i), &mut acts);
                let p_raw = acts[acts.len() - 1][data.labels[i]];
                if !p_raw.is_finite() {
                    return Err(Error::NonFinite);
                }
                let p = clamp_prob(p_raw);
                difficulties[i] = 1.0 - p;
                losses[i] = -p.ln();
                let label = data.labels[i];
                let signal = SampleSignal { prob: p, loss: losses[i], label, class_count: class_counts[label] };
                raw.push(scheme.weight(&signal)?);
            }
            let weights = match normalize_weights(&WeightVector::new(raw)?) {
                Ok(w) => w,
                Err(Error::DegenerateBatch) => {
                    return Err(Error::DegenerateTraining {
                        epoch,
                        detail: format!("scheme {scheme:?} zeroed every sample in a batch"),
                    })
                }
                Err(e) => return Err(e),
            };
            let mut grads = model.zeros_like();
            let b = batch.len() as f64;
            for (&i, &w) in batch.iter().zip(weights.as_slice()) {
                weight_sum[data.labels[i]] += w;
                if w != 0.0 {
                    accumulate_sample(&model, data.row(i), data.labels[i], w / b, &mut acts, &mut deltas, &mut grads)?;
                }
            }
            opt.step(&mut model, &grads, lr, config.momentum, config.weight_decay);
        }

        let profile = DifficultyProfile::new(difficulties.clone(), epoch, config.bins)?;
        let (mut clean, mut noisy) = ((0.0, 0usize), (0.0, 0usize));
        if config.track_clean_noisy && data.clean_labels.is_some() {
            for (i, l) in losses.iter().enumerate() {
                let slot = if data.is_noisy(i) { &mut noisy } else { &mut clean };
                slot.0 += l;
                slot.1 += 1;
            }
        }
        let mean = |s: (f64, usize)| (s.1 > 0).then(|| s.0 / s.1 as f64);
        let train_eval = evaluate(&model, data)?;
        let test_eval = test.map(|t| evaluate(&model, t)).transpose()?;
        records.push(EpochRecord {
            epoch,
            lr,
            mode: classify_mode(&scheme, 101).ok(),
            scheme,
            train_accuracy: train_eval.accuracy,
            test_accuracy: test_eval.as_ref().map(|e| e.accuracy),
            per_class_test_accuracy: test_eval.map(|e| e.per_class).unwrap_or_default(),
            mean_loss: losses.iter().sum::<f64>() / n as f64,
            mean_loss_clean: mean(clean),
            mean_loss_noisy: mean(noisy),
            mean_weight_per_class: weight_sum
                .iter()
                .zip(&class_counts)
                .map(|(w, c)| (*c > 0).then(|| w / *c as f64))
                .collect(),
            mean_difficulty: difficulties.iter().sum::<f64>() / n as f64,
            difficulty_density: profile.histogram.densities().to_vec(),
        });
        latest = Some(profile);
    }

    let final_test_accuracy = records.last().and_then(|r| r.test_accuracy);
    let best = records
        .iter()
        .filter_map(|r| r.test_accuracy.map(|a| (r.epoch, a)))
        .fold(None::<(usize, f64)>, |acc, (e, a)| match acc {
            Some((_, b)) if b >= a => acc,
            _ => Some((e, a)),
        });
    Ok((
        model,
        TrainReport {
            epochs: records,
            final_test_accuracy,
            best_test_accuracy: best.map(|b| b.1),
            best_epoch: best.map(|b| b.0),
        },
    ))
}

/// Per-sample losses of a uniformly weighted model trained for `epochs`.
pub fn probe_losses(data: &LabeledDataset, epochs: usize, seed: u64, arch: Architecture) -> Result<Vec<f64>> {
    let mut cfg = TrainConfig::new(epochs, ModeSchedule::Fixed { scheme: WeightScheme::Uniform }, seed);
    cfg.architecture = arch;
    cfg.track_clean_noisy = false;
    let (model, _) = train_model(data, None, &cfg)?;
    (0..data.len())
        .map(|i| per_sample_loss(&forward(&model, data.row(i))?, data.labels[i]))
        .collect()
}

/// Generates the base mixture and applies the modifier to its training split.
pub fn build_scenario(spec: &ScenarioSpec, arch: Architecture) -> Result<Scenario> {
    spec.modifier.validate()?;
    let generated = make_gaussian_mixture(&spec.base)?;
    let train = generated.train();
    let test = generated.test();
    let seed = spec.base.seed;
    let train = match &spec.modifier {
        Modifier::None => train,
        Modifier::FlipNoise { rate } => apply_flip_noise(&train, *rate, derive_seed(seed, 1))?,
        Modifier::UniformNoise { rate } => apply_uniform_noise(&train, *rate, derive_seed(seed, 1))?,
        Modifier::LongTail { imbalance_factor } => make_longtail(&train, *imbalance_factor)?,
        Modifier::DifficultySkew { skew, keep_n, probe_epochs } => {
            make_difficulty_skewed(&train, *skew, *keep_n, derive_seed(seed, 2), |d| {
                probe_losses(d, *probe_epochs, derive_seed(seed, 3), arch)
            })?
        }
    };
    Ok(Scenario { train, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::MixtureSpec;

    fn tiny_data() -> LabeledDataset {
        let x = vec![0.3, -1.2, 1.1, 0.4, -0.7, 0.9];
        LabeledDataset::new(2, 3, x, vec![0, 2, 1]).unwrap()
    }

    fn random_mlp(seed: u64) -> ModelParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = ModelParams::init(2, 3, Architecture::Mlp { hidden: 5 }, &mut rng);
        for v in m.values_mut() {
            *v += 0.1 * rng.random::<f64>();
        }
        m
    }

    fn batch_objective(m: &ModelParams, data: &LabeledDataset, w: &[f64]) -> f64 {
        (0..data.len())
            .map(|i| w[i] * per_sample_loss(&forward(m, data.row(i)).unwrap(), data.labels[i]).unwrap())
            .sum::<f64>()
            / data.len() as f64
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = ModelParams::zeros(4, 5, Architecture::Mlp { hidden: 3 });
        let p = forward(&m, &[1.0, -2.0, 0.5, 3.0]).unwrap();
        for v in p {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn dominant_logit_saturates() {
        let mut m = ModelParams::zeros(1, 3, Architecture::Linear);
        m.layers[0].bias = vec![10.0, -10.0, -10.0];
        let p = forward(&m, &[0.0]).unwrap();
        assert!(p[0] > 0.9999);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn loss_values() {
        assert!((per_sample_loss(&[0.9, 0.1], 1).unwrap() - 10f64.ln()).abs() < 1e-12);
        assert_eq!(per_sample_loss(&[1.0, 0.0], 0).unwrap(), 0.0);
        assert!(per_sample_loss(&[1.0, 0.0], 1).unwrap().is_finite());
        assert!(per_sample_loss(&[1.0], 3).is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let m = ModelParams::zeros(3, 2, Architecture::Linear);
        assert!(matches!(forward(&m, &[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let data = tiny_data();
        let w = [0.5, 1.0, 1.5];
        let model = random_mlp(3);
        let grads = backward_weighted(&model, &data, &[0, 1, 2], &WeightVector::new(w.to_vec()).unwrap()).unwrap();
        let h = 1e-6;
        let analytic: Vec<f64> = grads.values().copied().collect();
        for (k, g) in analytic.iter().enumerate() {
            let mut plus = model.clone();
            let mut minus = model.clone();
            *plus.values_mut().nth(k).unwrap() += h;
            *minus.values_mut().nth(k).unwrap() -= h;
            let fd = (batch_objective(&plus, &data, &w) - batch_objective(&minus, &data, &w)) / (2.0 * h);
            let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-8);
            assert!(rel <= 1e-5, "param {k}: analytic {g} vs fd {fd}");
        }
    }

    #[test]
    fn weight_two_is_exactly_twice_solo_gradient() {
        let data = tiny_data();
        let model = random_mlp(4);
        let g = backward_weighted(&model, &data, &[0, 1, 2], &WeightVector::new(vec![0.0, 2.0, 0.0]).unwrap()).unwrap();
        let solo = per_sample_gradient(&model, data.row(1), data.labels[1]).unwrap();
        for (a, b) in g.values().zip(solo.values()) {
            assert!((a - 2.0 * b / 3.0).abs() <= 1e-15 * b.abs().max(1.0));
        }
        let ones = backward_weighted(&model, &data, &[0, 1, 2], &WeightVector::ones(3)).unwrap();
        let mut sum = model.zeros_like();
        for i in 0..3 {
            let gi = per_sample_gradient(&model, data.row(i), data.labels[i]).unwrap();
            for (s, v) in sum.values_mut().zip(gi.values()) {
                *s += v / 3.0;
            }
        }
        for (a, b) in ones.values().zip(sum.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn sgd_unrolls_by_hand() {
        let mut m = ModelParams::zeros(1, 2, Architecture::Linear);
        m.layers[0].weights = vec![1.0, -2.0];
        let mut g = m.zeros_like();
        g.layers[0].weights = vec![0.5, 0.25];
        let (lr, mu, wd) = (0.1, 0.9, 0.01);
        let mut opt = Sgd::new(&m);
        opt.step(&mut m, &g, lr, mu, wd);
        opt.step(&mut m, &g, lr, mu, wd);
        for (k, (theta0, grad)) in [(1.0, 0.5), (-2.0, 0.25)].into_iter().enumerate() {
            let v1 = grad + wd * theta0;
            let theta1 = theta0 - lr * v1;
            let v2 = mu * v1 + grad + wd * theta1;
            let theta2 = theta1 - lr * v2;
            assert!((m.layers[0].weights[k] - theta2).abs() < 1e-15);
            assert!((opt.velocity().layers[0].weights[k] - v2).abs() < 1e-15);
        }

        let before = m.clone();
        let mut fresh = Sgd::new(&m);
        let zero = m.zeros_like();
        fresh.step(&mut m, &zero, lr, mu, 0.0);
        assert_eq!(m, before);
    }

    #[test]
    fn evaluation_aggregates_per_class() {
        let mut m = ModelParams::zeros(2, 3, Architecture::Linear);
        m.layers[0].weights = vec![1.0, 0.0, 0.0, 1.0, -1.0, -1.0];
        let x = vec![2.0, 0.0, 0.0, 2.0, -1.0, -1.0, 0.0, 3.0, 3.0, 0.0];
        let data = LabeledDataset::new(2, 3, x, vec![0, 1, 2, 0, 2]).unwrap();
        let e = evaluate(&m, &data).unwrap();
        assert_eq!(e.per_class, vec![Some(50.0), Some(100.0), Some(50.0)]);
        let weighted: f64 = e.per_class.iter().zip(&e.class_counts).map(|(a, n)| a.unwrap() * *n as f64).sum::<f64>() / 5.0;
        assert!((weighted - e.accuracy).abs() < 1e-9);
        assert!((e.accuracy - 60.0).abs() < 1e-12);
    }

    fn separable(seed: u64) -> Scenario {
        let spec = ScenarioSpec {
            base: MixtureSpec { classes: 3, dims: 2, per_class: 100, separation: 10.0, spread: 1.0, seed },
            modifier: Modifier::None,
        };
        build_scenario(&spec, Architecture::Mlp { hidden: 16 }).unwrap()
    }

    fn quick_config(scheme: WeightScheme) -> TrainConfig {
        let mut c = TrainConfig::new(8, ModeSchedule::Fixed { scheme }, 11);
        c.architecture = Architecture::Mlp { hidden: 16 };
        c.lr = 0.02;
        c
    }

    #[test]
    fn separable_data_is_learned() {
        let r = train(&separable(1), &quick_config(WeightScheme::Uniform)).unwrap();
        assert!(r.final_test_accuracy.unwrap() > 99.0);
        assert_eq!(r.epochs.len(), 8);
        for e in &r.epochs {
            assert!((0.0..=100.0).contains(&e.train_accuracy));
        }
    }

    #[test]
    fn training_is_deterministic() {
        let s = separable(2);
        let cfg = quick_config(WeightScheme::FlexW { gamma: 0.5, alpha: 0.15 });
        assert_eq!(train(&s, &cfg).unwrap(), train(&s, &cfg).unwrap());
    }

    #[test]
    fn flat_flexw_matches_uniform() {
        let s = separable(3);
        let a = train(&s, &quick_config(WeightScheme::Uniform)).unwrap();
        let b = train(&s, &quick_config(WeightScheme::FlexW { gamma: 0.0, alpha: 0.3 })).unwrap();
        assert_eq!(a.final_test_accuracy, b.final_test_accuracy);
        for (x, y) in a.epochs.iter().zip(&b.epochs) {
            assert_eq!(x.mean_loss, y.mean_loss);
            assert_eq!(x.per_class_test_accuracy, y.per_class_test_accuracy);
            assert_eq!(x.mean_weight_per_class, y.mean_weight_per_class);
        }
    }

    #[test]
    fn zeroed_batch_aborts_with_epoch() {
        let s = separable(4);
        let mut cfg = quick_config(WeightScheme::SplBinary { lambda: 1e-12 });
        cfg.epochs = 2;
        match train(&s, &cfg) {
            Err(Error::DegenerateTraining { epoch, .. }) => assert_eq!(epoch, 1),
            other => panic!("expected degenerate training, got {other:?}"),
        }
    }

    #[test]
    fn lr_drops_apply() {
        let cfg = TrainConfig::new(10, ModeSchedule::Fixed { scheme: WeightScheme::Uniform }, 0);
        assert_eq!(cfg.lr_drops, vec![3, 6, 8]);
        assert!((cfg.lr_at(2) - 0.1).abs() < 1e-15);
        assert!((cfg.lr_at(3) - 0.02).abs() < 1e-15);
        assert!((cfg.lr_at(10) - 0.1 * 0.2f64.powi(3)).abs() < 1e-15);
    }
}
