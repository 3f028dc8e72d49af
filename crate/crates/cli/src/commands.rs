//! Execution of each subcommand against a resolved configuration.

use std::path::Path;

use anyhow::Context;
use flexw_core::biasvar::{
    check_assumptions, check_proposition, run_biasvar, AssumptionVerdict, BiasVarReport, Direction, PropositionCheck, Region,
};
use flexw_core::datagen::{make_gaussian_mixture, Modifier, Scenario, ScenarioSpec};
use flexw_core::derive_seed;
use flexw_core::difficulty::{tau_curve, DifficultyProfile, TauCurve};
use flexw_core::schedule::{grid_search, ModeSchedule, SearchResult};
use flexw_core::trainer::{build_scenario, evaluate, train, train_model, TrainReport};
use flexw_core::weighting::{classify_mode, sample_curve, PriorityMode, WeightScheme};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{
    BiasVarJob, CurveJob, DensityShape, Job, ProfileSource, RunConfig, SchemaErrors, SweepJob, TauJob, TrainJob,
};
use crate::output::{dataset_table, epoch_table, header, num, opt_num, OutputDir};

/// Seed stream of the training run (streams 1-3 belong to scenario building).
const TRAIN_STREAM: u64 = 4;
/// Seed stream of the sweep's validation sample.
const VALIDATION_STREAM: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveResult {
    pub name: String,
    pub scheme: WeightScheme,
    /// `None` when the curve has more than one turn.
    pub mode: Option<PriorityMode>,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauResult {
    pub samples: usize,
    pub recommended_mode: Option<PriorityMode>,
    pub curve: TauCurve,
}

/// All seeds of one named schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub name: String,
    pub seeds: Vec<u64>,
    pub reports: Vec<TrainReport>,
    /// Largest and smallest training class, when the classes are unequal.
    pub head_tail: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub seeds: Vec<u64>,
    pub final_test_accuracy: Vec<f64>,
    pub best_test_accuracy: Vec<f64>,
    pub mean_final_test_accuracy: f64,
    pub mean_best_test_accuracy: f64,
    /// Per seed: first epoch from which noisy-sample loss stays above
    /// clean-sample loss to the end.
    pub noisy_above_clean_since: Vec<Option<usize>>,
    /// Per seed: first epoch from which the smallest class's mean weight
    /// stays above the largest class's.
    pub tail_above_head_since: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasVarResult {
    pub base: BiasVarReport,
    pub weighted_hard: BiasVarReport,
    pub weighted_easy: BiasVarReport,
    pub assumptions: AssumptionVerdict,
    pub proposition1: PropositionCheck,
    pub proposition2: PropositionCheck,
}

#[derive(Debug, Clone, PartialEq)]
pub enum JobResult {
    Curves(Vec<CurveResult>),
    Tau(TauResult),
    Train(Vec<RunResult>),
    Sweep(SearchResult),
    Biasvar(Box<BiasVarResult>),
}

/// Runs `cfg`, writing its reports under `out`.
pub fn execute(cfg: &RunConfig, out: &mut OutputDir) -> anyhow::Result<JobResult> {
    match &cfg.job {
        Job::WeightsCurve(j) => weights_curve(j, out).map(JobResult::Curves),
        Job::Tau(j) => tau(j, cfg.seed, out).map(JobResult::Tau),
        Job::Train(j) => train_runs(j, out).map(JobResult::Train),
        Job::Sweep(j) => sweep(j, cfg.seed, out).map(JobResult::Sweep),
        Job::Biasvar(j) => biasvar(j, out).map(|r| JobResult::Biasvar(Box::new(r))),
    }
}

fn weights_curve(job: &CurveJob, out: &mut OutputDir) -> anyhow::Result<Vec<CurveResult>> {
    let mut results = Vec::new();
    for c in &job.curves {
        let points = sample_curve(&c.scheme, job.grid_size).with_context(|| format!("curve `{}`", c.name))?;
        let mode = match classify_mode(&c.scheme, job.grid_size) {
            Ok(m) => Some(m),
            Err(flexw_core::Error::AmbiguousCurve { .. }) => None,
            Err(e) => return Err(e).with_context(|| format!("curve `{}`", c.name)),
        };
        results.push(CurveResult { name: c.name.clone(), scheme: c.scheme.clone(), mode, points });
    }
    let rows: Vec<Vec<String>> = results
        .iter()
        .flat_map(|r| r.points.iter().map(move |(d, w)| vec![r.name.clone(), num(*d), num(*w)]))
        .collect();
    out.csv("curves.csv", &header(&["curve", "d", "w"]), &rows)?;
    let summary: Vec<_> = results
        .iter()
        .map(|r| serde_json::json!({ "name": r.name, "scheme": r.scheme, "mode": r.mode }))
        .collect();
    out.json("curves.json", &summary)?;
    Ok(results)
}

/// Draws `n` difficulties from an analytic density.
pub fn sample_shape(shape: DensityShape, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            let d = match shape {
                DensityShape::EasyExcess => 1.0 - u.sqrt(),
                DensityShape::HardExcess => u.sqrt(),
                DensityShape::MediumExcess => 0.5 * (u + v),
                DensityShape::EndsExcess => {
                    let r = 0.5 * u.sqrt();
                    if v < 0.5 {
                        0.5 - r
                    } else {
                        0.5 + r
                    }
                }
                DensityShape::Uniform => u,
            };
            d.clamp(0.0, 1.0)
        })
        .collect()
}

/// Reads one difficulty per line; a `difficulty` header and blank lines are
/// allowed. Every malformed line is reported.
pub fn read_profile(path: &Path) -> anyhow::Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read profile {}", path.display()))?;
    let mut values = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let s = line.trim();
        if s.is_empty() || (i == 0 && s == "difficulty") {
            continue;
        }
        match s.parse::<f64>() {
            Ok(d) if (0.0..=1.0).contains(&d) => values.push(d),
            _ => errors.push(format!("{} line {}: `{s}` is not a difficulty in [0, 1]", path.display(), i + 1)),
        }
    }
    if values.is_empty() && errors.is_empty() {
        errors.push(format!("{}: no difficulties found", path.display()));
    }
    if !errors.is_empty() {
        return Err(SchemaErrors(errors).into());
    }
    Ok(values)
}

fn tau(job: &TauJob, seed: u64, out: &mut OutputDir) -> anyhow::Result<TauResult> {
    let difficulties = match &job.source {
        ProfileSource::File { path } => read_profile(path)?,
        ProfileSource::Shape { shape, samples } => sample_shape(*shape, *samples, seed),
    };
    let samples = difficulties.len();
    let profile = DifficultyProfile::new(difficulties, 0, job.bins)?;
    let curve = tau_curve(&job.target, &profile)?;
    let rows: Vec<Vec<String>> = (0..curve.centers.len())
        .map(|b| vec![num(curve.centers[b]), num(curve.density[b]), opt_num(curve.tau[b])])
        .collect();
    out.csv("tau.csv", &header(&["bin_center", "density", "tau"]), &rows)?;
    let result = TauResult { samples, recommended_mode: curve.inferred_mode, curve };
    out.json("tau.json", &result)?;
    Ok(result)
}

/// First epoch from which `pred` holds through the final epoch.
fn holds_since(report: &TrainReport, pred: impl Fn(&flexw_core::trainer::EpochRecord) -> Option<bool>) -> Option<usize> {
    let mut since = None;
    for e in report.epochs.iter().rev() {
        if pred(e)? {
            since = Some(e.epoch);
        } else {
            break;
        }
    }
    since
}

pub fn noisy_above_clean_since(report: &TrainReport) -> Option<usize> {
    holds_since(report, |e| Some(e.mean_loss_noisy? > e.mean_loss_clean?))
}

pub fn tail_above_head_since(report: &TrainReport, head: usize, tail: usize) -> Option<usize> {
    holds_since(report, |e| {
        let w = &e.mean_weight_per_class;
        Some(w.get(tail).copied()?? > w.get(head).copied()??)
    })
}

impl RunResult {
    pub fn summary(&self) -> RunSummary {
        let finals: Vec<f64> = self.reports.iter().map(|r| r.final_test_accuracy.unwrap_or(f64::NAN)).collect();
        let bests: Vec<f64> = self.reports.iter().map(|r| r.best_test_accuracy.unwrap_or(f64::NAN)).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        RunSummary {
            name: self.name.clone(),
            seeds: self.seeds.clone(),
            mean_final_test_accuracy: mean(&finals),
            mean_best_test_accuracy: mean(&bests),
            final_test_accuracy: finals,
            best_test_accuracy: bests,
            noisy_above_clean_since: self.reports.iter().map(noisy_above_clean_since).collect(),
            tail_above_head_since: self
                .reports
                .iter()
                .map(|r| self.head_tail.and_then(|(h, t)| tail_above_head_since(r, h, t)))
                .collect(),
        }
    }
}

fn head_and_tail(counts: &[usize]) -> Option<(usize, usize)> {
    let head = (0..counts.len()).max_by_key(|&c| (counts[c], std::cmp::Reverse(c)))?;
    let tail = (0..counts.len()).min_by_key(|&c| (counts[c], c))?;
    (counts[head] > counts[tail]).then_some((head, tail))
}

fn scenario_for(template: &crate::config::ScenarioTemplate, seed: u64, settings: &crate::config::TrainSettings) -> anyhow::Result<Scenario> {
    let spec = ScenarioSpec { base: template.mixture(seed), modifier: template.modifier.clone() };
    build_scenario(&spec, settings.architecture).with_context(|| format!("building scenario for seed {seed}"))
}

fn train_runs(job: &TrainJob, out: &mut OutputDir) -> anyhow::Result<Vec<RunResult>> {
    let scenarios: Vec<Scenario> = job
        .seeds
        .par_iter()
        .map(|&s| scenario_for(&job.scenario, s, &job.settings))
        .collect::<anyhow::Result<_>>()?;
    let pairs: Vec<(usize, usize)> = (0..job.runs.len()).flat_map(|r| (0..job.seeds.len()).map(move |s| (r, s))).collect();
    let reports: Vec<TrainReport> = pairs
        .par_iter()
        .map(|&(r, s)| {
            let cfg = job.settings.to_config(job.runs[r].schedule.clone(), derive_seed(job.seeds[s], TRAIN_STREAM));
            train(&scenarios[s], &cfg).with_context(|| format!("run `{}`, seed {}", job.runs[r].name, job.seeds[s]))
        })
        .collect::<anyhow::Result<_>>()?;

    if job.write_datasets {
        for (seed, sc) in job.seeds.iter().zip(&scenarios) {
            for (split, data) in [("train", &sc.train), ("test", &sc.test)] {
                let (h, rows) = dataset_table(data);
                out.csv(&format!("data/seed_{seed}_{split}.csv"), &h, &rows)?;
            }
        }
    }

    let mut results = Vec::new();
    let mut chunks = reports.into_iter();
    for run in &job.runs {
        let reports: Vec<TrainReport> = chunks.by_ref().take(job.seeds.len()).collect();
        for (seed, report) in job.seeds.iter().zip(&reports) {
            out.json(&format!("runs/{}/seed_{seed}.json", run.name), report)?;
            let (h, rows) = epoch_table(report, job.scenario.classes);
            out.csv(&format!("runs/{}/seed_{seed}.csv", run.name), &h, &rows)?;
        }
        // Scenarios with equal class sizes have no head or tail.
        let head_tail = match job.scenario.modifier {
            Modifier::LongTail { .. } => head_and_tail(&scenarios[0].train.class_counts()),
            _ => None,
        };
        results.push(RunResult { name: run.name.clone(), seeds: job.seeds.clone(), reports, head_tail });
    }

    let summaries: Vec<RunSummary> = results.iter().map(RunResult::summary).collect();
    out.json("summary.json", &summaries)?;
    let rows: Vec<Vec<String>> = summaries
        .iter()
        .flat_map(|s| {
            (0..s.seeds.len()).map(move |i| {
                vec![
                    s.name.clone(),
                    s.seeds[i].to_string(),
                    num(s.final_test_accuracy[i]),
                    num(s.best_test_accuracy[i]),
                    s.noisy_above_clean_since[i].map(|e| e.to_string()).unwrap_or_default(),
                    s.tail_above_head_since[i].map(|e| e.to_string()).unwrap_or_default(),
                ]
            })
        })
        .collect();
    out.csv(
        "summary.csv",
        &header(&["run", "seed", "final_test_accuracy", "best_test_accuracy", "noisy_above_clean_since", "tail_above_head_since"]),
        &rows,
    )?;
    Ok(results)
}

fn sweep(job: &SweepJob, seed: u64, out: &mut OutputDir) -> anyhow::Result<SearchResult> {
    let scenario = scenario_for(&job.scenario, seed, &job.settings)?;
    let mut spec = job.scenario.mixture(derive_seed(seed, VALIDATION_STREAM));
    spec.per_class = job.validation_per_class;
    let validation = make_gaussian_mixture(&spec)?.data;
    let train_seed = derive_seed(seed, TRAIN_STREAM);
    let result = grid_search(&job.boxes, job.steps, job.budget, |cell| {
        let cfg = job.settings.to_config(ModeSchedule::Fixed { scheme: cell.scheme() }, train_seed);
        let (model, _) = train_model(&scenario.train, None, &cfg)?;
        Ok(evaluate(&model, &validation)?.accuracy)
    })?;
    let rows: Vec<Vec<String>> = result
        .table
        .iter()
        .map(|r| vec![r.mode.as_str().to_string(), num(r.gamma), num(r.alpha), num(r.val_accuracy)])
        .collect();
    out.csv("sweep.csv", &header(&["mode", "gamma", "alpha", "val_accuracy"]), &rows)?;
    out.json("sweep.json", &result)?;
    Ok(result)
}

fn biasvar(job: &BiasVarJob, out: &mut OutputDir) -> anyhow::Result<BiasVarResult> {
    let base = run_biasvar(&job.config)?;
    let weighted_hard = run_biasvar(&job.config.weighted(Region::Hard, job.epsilon))?;
    let weighted_easy = run_biasvar(&job.config.weighted(Region::Easy, job.epsilon))?;
    let assumptions = check_assumptions(&base)?;
    let proposition1 = check_proposition(&base, &weighted_hard, Direction::Hard)?;
    let proposition2 = check_proposition(&base, &weighted_easy, Direction::Easy)?;

    let mut head = vec!["fit".to_string(), "degree".to_string()];
    for scope in ["global", "easy", "medium", "hard"] {
        for term in ["bias", "variance", "error"] {
            head.push(format!("{scope}_{term}"));
        }
    }
    let mut rows = Vec::new();
    for (fit, report) in [("base", &base), ("weighted_hard", &weighted_hard), ("weighted_easy", &weighted_easy)] {
        for row in &report.rows {
            let mut r = vec![fit.to_string(), row.degree.to_string()];
            for t in [&row.global, &row.easy, &row.medium, &row.hard] {
                r.extend([num(t.bias), num(t.variance), num(t.error)]);
            }
            rows.push(r);
        }
    }
    out.csv("biasvar.csv", &head, &rows)?;
    let result = BiasVarResult { base, weighted_hard, weighted_easy, assumptions, proposition1, proposition2 };
    out.json("biasvar.json", &result)?;
    Ok(result)
}
