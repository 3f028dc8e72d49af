//! TOML run configuration.
//!
//! A file is read into loosely typed TOML first and then walked field by
//! field, so that every problem in it is reported at once. The result is a
//! fully resolved [`RunConfig`] with all defaults filled in; that form is
//! what a run manifest stores and what a re-run executes.

use std::fmt;
use std::path::{Path, PathBuf};

use flexw_core::biasvar::{BiasVarConfig, Region, RegionBounds, TargetFunction};
use flexw_core::datagen::{MixtureSpec, Modifier, SkewKind};
use flexw_core::difficulty::{BinnedDensity, TargetDensity, DEFAULT_BINS};
use flexw_core::schedule::{alternate_boxes, stable_boxes, AdaptiveSchedule, ModeBox, ModeParams, ModeSchedule};
use flexw_core::trainer::{default_lr_drops, Architecture, TrainConfig};
use flexw_core::weighting::{PriorityMode, WeightScheme};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

/// Every schema violation found in a configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaErrors(pub Vec<String>);

impl fmt::Display for SchemaErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} configuration error(s):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for SchemaErrors {}

/// Which subcommand a configuration is resolved for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    WeightsCurve,
    Tau,
    Train,
    Sweep,
    Biasvar,
}

impl CommandKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandKind::WeightsCurve => "weights-curve",
            CommandKind::Tau => "tau",
            CommandKind::Train => "train",
            CommandKind::Sweep => "sweep",
            CommandKind::Biasvar => "biasvar",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub job: Job,
}

impl RunConfig {
    pub fn command(&self) -> CommandKind {
        match self.job {
            Job::WeightsCurve(_) => CommandKind::WeightsCurve,
            Job::Tau(_) => CommandKind::Tau,
            Job::Train(_) => CommandKind::Train,
            Job::Sweep(_) => CommandKind::Sweep,
            Job::Biasvar(_) => CommandKind::Biasvar,
        }
    }

    /// Seeds that drive the run's randomness.
    pub fn seeds(&self) -> Vec<u64> {
        match &self.job {
            Job::Train(t) => t.seeds.clone(),
            Job::WeightsCurve(_) => Vec::new(),
            _ => vec![self.seed],
        }
    }

    /// Replaces the base seed and everything derived from it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        match &mut self.job {
            Job::Train(t) => t.seeds = (seed..seed + t.seeds.len() as u64).collect(),
            Job::Biasvar(b) => b.config.seed = seed,
            _ => {}
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Job {
    WeightsCurve(CurveJob),
    Tau(TauJob),
    Train(TrainJob),
    Sweep(SweepJob),
    Biasvar(BiasVarJob),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedScheme {
    pub name: String,
    pub scheme: WeightScheme,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveJob {
    pub grid_size: usize,
    pub curves: Vec<NamedScheme>,
}

/// Analytic difficulty densities; each is named after the band that is
/// over-represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityShape {
    /// Density `2 (1 - d)`.
    EasyExcess,
    /// Density `2 d`.
    HardExcess,
    /// Triangle peaked at 0.5.
    MediumExcess,
    /// Density `4 |d - 0.5|`.
    EndsExcess,
    Uniform,
}

impl DensityShape {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "easy_excess" => DensityShape::EasyExcess,
            "hard_excess" => DensityShape::HardExcess,
            "medium_excess" => DensityShape::MediumExcess,
            "ends_excess" => DensityShape::EndsExcess,
            "uniform" => DensityShape::Uniform,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileSource {
    /// One difficulty per line, optionally under a `difficulty` header.
    File { path: PathBuf },
    Shape { shape: DensityShape, samples: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauJob {
    pub bins: usize,
    pub source: ProfileSource,
    pub target: TargetDensity,
}

/// Generator parameters without the seed, which comes from the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTemplate {
    pub classes: usize,
    pub dims: usize,
    pub per_class: usize,
    pub separation: f64,
    pub spread: f64,
    pub modifier: Modifier,
}

impl ScenarioTemplate {
    pub fn mixture(&self, seed: u64) -> MixtureSpec {
        MixtureSpec {
            classes: self.classes,
            dims: self.dims,
            per_class: self.per_class,
            separation: self.separation,
            spread: self.spread,
            seed,
        }
    }
}

/// Optimizer and model settings shared by every run of a job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_drops: Vec<usize>,
    pub lr_drop_factor: f64,
    pub architecture: Architecture,
    pub track_clean_noisy: bool,
    pub bins: usize,
}

impl TrainSettings {
    pub fn to_config(&self, schedule: ModeSchedule, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            lr_drops: self.lr_drops.clone(),
            lr_drop_factor: self.lr_drop_factor,
            seed,
            architecture: self.architecture,
            schedule,
            track_clean_noisy: self.track_clean_noisy,
            bins: self.bins,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSchedule {
    pub name: String,
    pub schedule: ModeSchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainJob {
    pub scenario: ScenarioTemplate,
    pub settings: TrainSettings,
    pub runs: Vec<NamedSchedule>,
    pub seeds: Vec<u64>,
    pub write_datasets: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepJob {
    pub scenario: ScenarioTemplate,
    pub settings: TrainSettings,
    pub boxes: Vec<ModeBox>,
    pub steps: usize,
    pub budget: Option<usize>,
    /// Size of the fresh clean sample each cell is scored on, per class.
    pub validation_per_class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasVarJob {
    /// Unweighted base configuration.
    pub config: BiasVarConfig,
    /// Region weight used for the two proposition checks.
    pub epsilon: f64,
}

/// Reads a configuration file for `command`.
pub fn load(path: &Path, command: CommandKind) -> anyhow::Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SchemaErrors(vec![format!("cannot read config {}: {e}", path.display())]))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(parse(&text, command, base)?)
}

/// Parses configuration text; relative paths resolve against `base_dir`.
pub fn parse(text: &str, command: CommandKind, base_dir: &Path) -> Result<RunConfig, SchemaErrors> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| SchemaErrors(vec![format!("invalid TOML: {}", e.to_string().trim_end())]))?;
    let mut r = Reader { errors: Vec::new(), base_dir: base_dir.to_path_buf() };
    r.check_keys(
        &table,
        "",
        &["seed", "mode_params", "weights_curve", "tau", "scenario", "train", "sweep", "biasvar"],
    );
    let seed = r.u64_or(&table, "", "seed", 0);
    let params = r.mode_params(&table);
    let job = match command {
        CommandKind::WeightsCurve => Job::WeightsCurve(r.curve_job(&table, &params)),
        CommandKind::Tau => Job::Tau(r.tau_job(&table)),
        CommandKind::Train => Job::Train(r.train_job(&table, &params, seed)),
        CommandKind::Sweep => Job::Sweep(r.sweep_job(&table)),
        CommandKind::Biasvar => Job::Biasvar(r.biasvar_job(&table, seed)),
    };
    if r.errors.is_empty() {
        Ok(RunConfig { seed, job })
    } else {
        Err(SchemaErrors(r.errors))
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "string",
        Value::Integer(_) => "integer",
        Value::Float(_) => "float",
        Value::Boolean(_) => "boolean",
        Value::Datetime(_) => "datetime",
        Value::Array(_) => "array",
        Value::Table(_) => "table",
    }
}

struct Reader {
    errors: Vec<String>,
    base_dir: PathBuf,
}

impl Reader {
    fn err(&mut self, path: &str, msg: impl fmt::Display) {
        self.errors.push(format!("`{path}`: {msg}"));
    }

    fn missing(&mut self, path: &str) {
        self.err(path, "missing required field");
    }

    fn wrong(&mut self, path: &str, expected: &str, v: &Value) {
        self.err(path, format!("expected {expected}, found {}", type_name(v)));
    }

    fn check_keys(&mut self, t: &Table, path: &str, allowed: &[&str]) {
        for k in t.keys() {
            if !allowed.contains(&k.as_str()) {
                self.err(&join(path, k), format!("unknown field (expected one of: {})", allowed.join(", ")));
            }
        }
    }

    fn table<'a>(&mut self, t: &'a Table, path: &str, key: &str) -> Option<&'a Table> {
        match t.get(key)? {
            Value::Table(inner) => Some(inner),
            other => {
                self.wrong(&join(path, key), "table", other);
                None
            }
        }
    }

    /// A required top-level section; an empty table stands in when absent.
    fn section<'a>(&mut self, root: &'a Table, key: &str, empty: &'a Table) -> &'a Table {
        if !root.contains_key(key) {
            self.missing(key);
        }
        self.table(root, "", key).unwrap_or(empty)
    }

    fn f64_of(&mut self, path: &str, v: &Value) -> Option<f64> {
        match v {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            other => {
                self.wrong(path, "number", other);
                None
            }
        }
    }

    fn f64_opt(&mut self, t: &Table, path: &str, key: &str) -> Option<f64> {
        let v = t.get(key)?;
        self.f64_of(&join(path, key), v)
    }

    fn f64_req(&mut self, t: &Table, path: &str, key: &str) -> Option<f64> {
        if !t.contains_key(key) {
            self.missing(&join(path, key));
        }
        self.f64_opt(t, path, key)
    }

    fn f64_or(&mut self, t: &Table, path: &str, key: &str, default: f64) -> f64 {
        self.f64_opt(t, path, key).unwrap_or(default)
    }

    fn u64_of(&mut self, path: &str, v: &Value) -> Option<u64> {
        match v {
            Value::Integer(i) if *i >= 0 => Some(*i as u64),
            Value::Integer(i) => {
                self.err(path, format!("must be nonnegative, got {i}"));
                None
            }
            other => {
                self.wrong(path, "integer", other);
                None
            }
        }
    }

    fn u64_or(&mut self, t: &Table, path: &str, key: &str, default: u64) -> u64 {
        match t.get(key) {
            Some(v) => self.u64_of(&join(path, key), v).unwrap_or(default),
            None => default,
        }
    }

    fn usize_opt(&mut self, t: &Table, path: &str, key: &str) -> Option<usize> {
        let v = t.get(key)?;
        self.u64_of(&join(path, key), v).map(|x| x as usize)
    }

    fn usize_req(&mut self, t: &Table, path: &str, key: &str) -> Option<usize> {
        if !t.contains_key(key) {
            self.missing(&join(path, key));
        }
        self.usize_opt(t, path, key)
    }

    fn usize_or(&mut self, t: &Table, path: &str, key: &str, default: usize) -> usize {
        self.usize_opt(t, path, key).unwrap_or(default)
    }

    fn bool_or(&mut self, t: &Table, path: &str, key: &str, default: bool) -> bool {
        match t.get(key) {
            Some(Value::Boolean(b)) => *b,
            Some(other) => {
                self.wrong(&join(path, key), "boolean", other);
                default
            }
            None => default,
        }
    }

    fn str_opt<'a>(&mut self, t: &'a Table, path: &str, key: &str) -> Option<&'a str> {
        match t.get(key)? {
            Value::String(s) => Some(s),
            other => {
                self.wrong(&join(path, key), "string", other);
                None
            }
        }
    }

    fn str_req<'a>(&mut self, t: &'a Table, path: &str, key: &str) -> Option<&'a str> {
        if !t.contains_key(key) {
            self.missing(&join(path, key));
        }
        self.str_opt(t, path, key)
    }

    fn array<'a>(&mut self, t: &'a Table, path: &str, key: &str) -> Option<&'a Vec<Value>> {
        match t.get(key)? {
            Value::Array(a) => Some(a),
            other => {
                self.wrong(&join(path, key), "array", other);
                None
            }
        }
    }

    fn f64_array(&mut self, t: &Table, path: &str, key: &str) -> Option<Vec<f64>> {
        let items = self.array(t, path, key)?;
        let p = join(path, key);
        let out: Vec<Option<f64>> = items
            .iter()
            .enumerate()
            .map(|(i, v)| self.f64_of(&format!("{p}[{i}]"), v))
            .collect();
        out.into_iter().collect()
    }

    fn usize_array(&mut self, t: &Table, path: &str, key: &str) -> Option<Vec<usize>> {
        let items = self.array(t, path, key)?;
        let p = join(path, key);
        let out: Vec<Option<usize>> = items
            .iter()
            .enumerate()
            .map(|(i, v)| self.u64_of(&format!("{p}[{i}]"), v).map(|x| x as usize))
            .collect();
        out.into_iter().collect()
    }

    fn pair(&mut self, t: &Table, path: &str, key: &str) -> Option<(f64, f64)> {
        let v = self.f64_array(t, path, key)?;
        if v.len() != 2 {
            self.err(&join(path, key), format!("expected two numbers, found {}", v.len()));
            return None;
        }
        Some((v[0], v[1]))
    }

    /// Runs a core validation and records its message under `path`.
    fn validated<T>(&mut self, path: &str, value: T, check: impl FnOnce(&T) -> flexw_core::Result<()>) -> Option<T> {
        match check(&value) {
            Ok(()) => Some(value),
            Err(e) => {
                self.err(path, e);
                None
            }
        }
    }

    fn mode(&mut self, path: &str, s: &str) -> Option<PriorityMode> {
        match s.parse::<PriorityMode>() {
            Ok(m) => Some(m),
            Err(_) => {
                self.err(path, format!("unknown mode `{s}` (expected easy_first, medium_first, hard_first, two_ends_first or flat)"));
                None
            }
        }
    }

    fn mode_params(&mut self, root: &Table) -> ModeParams {
        let mut p = ModeParams::default();
        let Some(t) = self.table(root, "", "mode_params") else { return p };
        self.check_keys(t, "mode_params", &["easy", "medium", "hard", "two_ends"]);
        for (key, slot) in [("easy", &mut p.easy), ("medium", &mut p.medium), ("hard", &mut p.hard), ("two_ends", &mut p.two_ends)] {
            if let Some(v) = self.pair(t, "mode_params", key) {
                *slot = v;
            }
        }
        p
    }

    /// A scheme table: either `{ mode = ... }` or `{ kind = ..., <params> }`.
    fn scheme(&mut self, t: &Table, path: &str, params: &ModeParams) -> Option<WeightScheme> {
        if let Some(m) = self.str_opt(t, path, "mode") {
            self.check_keys(t, path, &["mode"]);
            let mode = self.mode(&join(path, "mode"), m)?;
            return Some(params.scheme_for(mode));
        }
        let kind = match t.get("kind") {
            Some(_) => self.str_opt(t, path, "kind")?,
            None => {
                self.err(path, "scheme needs either `mode` or `kind`");
                return None;
            }
        };
        let scheme = match kind {
            "flexw" => {
                self.check_keys(t, path, &["kind", "gamma", "alpha"]);
                let gamma = self.f64_req(t, path, "gamma");
                let alpha = self.f64_req(t, path, "alpha");
                WeightScheme::FlexW { gamma: gamma?, alpha: alpha? }
            }
            "flexw_spl" => {
                self.check_keys(t, path, &["kind", "gamma", "alpha", "lambda"]);
                let gamma = self.f64_req(t, path, "gamma");
                let alpha = self.f64_req(t, path, "alpha");
                let lambda = self.f64_req(t, path, "lambda");
                WeightScheme::FlexWSpl { gamma: gamma?, alpha: alpha?, lambda: lambda? }
            }
            "flexw_class_scaled" => {
                self.check_keys(t, path, &["kind", "gamma", "alpha", "class_scales"]);
                let gamma = self.f64_req(t, path, "gamma");
                let alpha = self.f64_req(t, path, "alpha");
                if !t.contains_key("class_scales") {
                    self.missing(&join(path, "class_scales"));
                }
                let class_scales = self.f64_array(t, path, "class_scales");
                WeightScheme::FlexWClassScaled { gamma: gamma?, alpha: alpha?, class_scales: class_scales? }
            }
            "focal" => {
                self.check_keys(t, path, &["kind", "gamma"]);
                WeightScheme::Focal { gamma: self.f64_req(t, path, "gamma")? }
            }
            "spl_binary" => {
                self.check_keys(t, path, &["kind", "lambda"]);
                WeightScheme::SplBinary { lambda: self.f64_req(t, path, "lambda")? }
            }
            "spl_log" => {
                self.check_keys(t, path, &["kind", "lambda"]);
                WeightScheme::SplLog { lambda: self.f64_req(t, path, "lambda")? }
            }
            "class_balance" => {
                self.check_keys(t, path, &["kind", "beta"]);
                WeightScheme::ClassBalance { beta: self.f64_req(t, path, "beta")? }
            }
            "uniform" => {
                self.check_keys(t, path, &["kind"]);
                WeightScheme::Uniform
            }
            other => {
                self.err(&join(path, "kind"), format!("unknown scheme kind `{other}`"));
                return None;
            }
        };
        self.validated(path, scheme, |s| s.validate())
    }

    fn scheme_field(&mut self, t: &Table, path: &str, key: &str, params: &ModeParams) -> Option<WeightScheme> {
        if !t.contains_key(key) {
            self.missing(&join(path, key));
            return None;
        }
        let inner = self.table(t, path, key)?;
        self.scheme(inner, &join(path, key), params)
    }

    fn curve_job(&mut self, root: &Table, params: &ModeParams) -> CurveJob {
        let defaults = || {
            [PriorityMode::EasyFirst, PriorityMode::MediumFirst, PriorityMode::HardFirst, PriorityMode::TwoEndsFirst]
                .into_iter()
                .map(|m| NamedScheme { name: m.as_str().to_string(), scheme: params.scheme_for(m) })
                .collect::<Vec<_>>()
        };
        let Some(t) = self.table(root, "", "weights_curve") else {
            return CurveJob { grid_size: 101, curves: defaults() };
        };
        let path = "weights_curve";
        self.check_keys(t, path, &["grid_size", "curves"]);
        let grid_size = self.usize_or(t, path, "grid_size", 101);
        if grid_size < 16 {
            self.err(&join(path, "grid_size"), "must be >= 16");
        }
        let curves = match self.array(t, path, "curves") {
            None => defaults(),
            Some(items) => {
                let mut out = Vec::new();
                for (i, item) in items.iter().enumerate() {
                    let p = format!("{path}.curves[{i}]");
                    let Value::Table(ct) = item else {
                        self.wrong(&p, "table", item);
                        continue;
                    };
                    let name = ct.get("name").and_then(Value::as_str).map(str::to_string);
                    let mut scheme_table = ct.clone();
                    scheme_table.remove("name");
                    if let Some(scheme) = self.scheme(&scheme_table, &p, params) {
                        out.push(NamedScheme { name: name.unwrap_or_else(|| format!("curve_{i}")), scheme });
                    }
                }
                out
            }
        };
        CurveJob { grid_size, curves }
    }

    fn target_density(&mut self, t: &Table, path: &str, bins: usize) -> TargetDensity {
        let Some(tt) = self.table(t, path, "target") else { return TargetDensity::Uniform };
        let p = join(path, "target");
        match self.str_req(tt, &p, "kind") {
            Some("uniform") => {
                self.check_keys(tt, &p, &["kind"]);
                TargetDensity::Uniform
            }
            Some("binned") => {
                self.check_keys(tt, &p, &["kind", "densities"]);
                if !tt.contains_key("densities") {
                    self.missing(&join(&p, "densities"));
                }
                let Some(d) = self.f64_array(tt, &p, "densities") else { return TargetDensity::Uniform };
                if d.len() != bins {
                    self.err(&join(&p, "densities"), format!("has {} entries but bins = {bins}", d.len()));
                    return TargetDensity::Uniform;
                }
                match BinnedDensity::from_densities(d) {
                    Ok(density) => TargetDensity::Binned { density },
                    Err(e) => {
                        self.err(&join(&p, "densities"), e);
                        TargetDensity::Uniform
                    }
                }
            }
            Some(other) => {
                self.err(&join(&p, "kind"), format!("unknown target kind `{other}` (expected uniform or binned)"));
                TargetDensity::Uniform
            }
            None => TargetDensity::Uniform,
        }
    }

    fn tau_job(&mut self, root: &Table) -> TauJob {
        let path = "tau";
        let empty = Table::new();
        let t = self.section(root, path, &empty);
        self.check_keys(t, path, &["bins", "source", "target"]);
        let bins = self.usize_or(t, path, "bins", DEFAULT_BINS);
        if bins < 4 {
            self.err(&join(path, "bins"), "must be >= 4");
        }
        let placeholder = ProfileSource::Shape { shape: DensityShape::Uniform, samples: 0 };
        let source = match self.table(t, path, "source") {
            None => {
                if root.contains_key(path) && !t.contains_key("source") {
                    self.missing(&join(path, "source"));
                }
                placeholder
            }
            Some(st) => {
                let p = join(path, "source");
                match self.str_req(st, &p, "kind") {
                    Some("file") => {
                        self.check_keys(st, &p, &["kind", "path"]);
                        let file = self.str_req(st, &p, "path").unwrap_or_default();
                        ProfileSource::File { path: self.base_dir.join(file) }
                    }
                    Some("shape") => {
                        self.check_keys(st, &p, &["kind", "shape", "samples"]);
                        let shape = self.str_req(st, &p, "shape").and_then(|s| {
                            let parsed = DensityShape::parse(s);
                            if parsed.is_none() {
                                self.err(
                                    &join(&p, "shape"),
                                    format!("unknown shape `{s}` (expected easy_excess, hard_excess, medium_excess, ends_excess or uniform)"),
                                );
                            }
                            parsed
                        });
                        let samples = self.usize_or(st, &p, "samples", 100_000);
                        if samples == 0 {
                            self.err(&join(&p, "samples"), "must be >= 1");
                        }
                        ProfileSource::Shape { shape: shape.unwrap_or(DensityShape::Uniform), samples }
                    }
                    Some(other) => {
                        self.err(&join(&p, "kind"), format!("unknown source kind `{other}` (expected file or shape)"));
                        placeholder
                    }
                    None => placeholder,
                }
            }
        };
        let target = self.target_density(t, path, bins);
        TauJob { bins, source, target }
    }

    fn modifier(&mut self, t: &Table, path: &str) -> Modifier {
        let Some(mt) = self.table(t, path, "modifier") else { return Modifier::None };
        let p = join(path, "modifier");
        let m = match self.str_req(mt, &p, "kind") {
            Some("none") => {
                self.check_keys(mt, &p, &["kind"]);
                Modifier::None
            }
            Some(kind @ ("flip_noise" | "uniform_noise")) => {
                self.check_keys(mt, &p, &["kind", "rate"]);
                let rate = self.f64_req(mt, &p, "rate").unwrap_or(0.0);
                if kind == "flip_noise" {
                    Modifier::FlipNoise { rate }
                } else {
                    Modifier::UniformNoise { rate }
                }
            }
            Some("long_tail") => {
                self.check_keys(mt, &p, &["kind", "imbalance_factor"]);
                Modifier::LongTail { imbalance_factor: self.f64_req(mt, &p, "imbalance_factor").unwrap_or(1.0) }
            }
            Some("difficulty_skew") => {
                self.check_keys(mt, &p, &["kind", "skew", "keep_n", "probe_epochs"]);
                let skew = self.str_req(mt, &p, "skew").and_then(|s| match s.parse::<SkewKind>() {
                    Ok(k) => Some(k),
                    Err(e) => {
                        self.err(&join(&p, "skew"), e);
                        None
                    }
                });
                let keep_n = self.usize_req(mt, &p, "keep_n").unwrap_or(1);
                let probe_epochs = self.usize_or(mt, &p, "probe_epochs", 10);
                Modifier::DifficultySkew { skew: skew.unwrap_or(SkewKind::E), keep_n, probe_epochs }
            }
            Some(other) => {
                self.err(
                    &join(&p, "kind"),
                    format!("unknown modifier `{other}` (expected none, flip_noise, uniform_noise, long_tail or difficulty_skew)"),
                );
                Modifier::None
            }
            None => Modifier::None,
        };
        self.validated(&p, m, |m| m.validate()).unwrap_or(Modifier::None)
    }

    fn scenario(&mut self, root: &Table) -> ScenarioTemplate {
        let path = "scenario";
        let empty = Table::new();
        let t = self.section(root, path, &empty);
        self.check_keys(t, path, &["classes", "dims", "per_class", "separation", "spread", "modifier"]);
        let classes = self.usize_req(t, path, "classes").unwrap_or(2);
        let dims = self.usize_req(t, path, "dims").unwrap_or(1);
        let per_class = self.usize_req(t, path, "per_class").unwrap_or(2);
        let separation = self.f64_req(t, path, "separation").unwrap_or(1.0);
        let spread = self.f64_or(t, path, "spread", 1.0);
        if classes < 2 {
            self.err(&join(path, "classes"), "must be >= 2");
        }
        if dims < 1 {
            self.err(&join(path, "dims"), "must be >= 1");
        }
        if per_class < 2 {
            self.err(&join(path, "per_class"), "must be >= 2");
        }
        if !(separation > 0.0 && separation.is_finite()) {
            self.err(&join(path, "separation"), "must be finite and > 0");
        }
        if !(spread > 0.0 && spread.is_finite()) {
            self.err(&join(path, "spread"), "must be finite and > 0");
        }
        let modifier = self.modifier(t, path);
        if let Modifier::DifficultySkew { keep_n, .. } = modifier {
            // The modifier applies to the 80% training split.
            let available = per_class * classes - (per_class - per_class * 4 / 5) * classes;
            if keep_n > available {
                self.err(&join(path, "modifier.keep_n"), format!("{keep_n} exceeds the {available} training samples"));
            }
        }
        if let Modifier::LongTail { imbalance_factor } = modifier {
            let head = per_class * 4 / 5;
            if (head as f64) / imbalance_factor < 1.0 {
                self.err(&join(path, "modifier.imbalance_factor"), format!("tail class would keep fewer than one of {head} samples"));
            }
        }
        ScenarioTemplate { classes, dims, per_class, separation, spread, modifier }
    }

    fn settings(&mut self, t: &Table, path: &str) -> TrainSettings {
        let epochs = self.usize_req(t, path, "epochs").unwrap_or(1);
        let defaults = TrainConfig::new(epochs.max(1), ModeSchedule::Fixed { scheme: WeightScheme::Uniform }, 0);
        let hidden = self.usize_or(t, path, "hidden", 64);
        let architecture = match self.str_opt(t, path, "architecture").unwrap_or("mlp") {
            "mlp" => Architecture::Mlp { hidden },
            "linear" => Architecture::Linear,
            other => {
                self.err(&join(path, "architecture"), format!("unknown architecture `{other}` (expected mlp or linear)"));
                Architecture::Mlp { hidden }
            }
        };
        let settings = TrainSettings {
            epochs,
            batch_size: self.usize_or(t, path, "batch_size", defaults.batch_size),
            lr: self.f64_or(t, path, "lr", defaults.lr),
            momentum: self.f64_or(t, path, "momentum", defaults.momentum),
            weight_decay: self.f64_or(t, path, "weight_decay", defaults.weight_decay),
            lr_drops: self.usize_array(t, path, "lr_drops").unwrap_or_else(|| default_lr_drops(epochs)),
            lr_drop_factor: self.f64_or(t, path, "lr_drop_factor", defaults.lr_drop_factor),
            architecture,
            track_clean_noisy: self.bool_or(t, path, "track_clean_noisy", true),
            bins: self.usize_or(t, path, "bins", defaults.bins),
        };
        let probe = settings.to_config(ModeSchedule::Fixed { scheme: WeightScheme::Uniform }, 0);
        self.validated(path, (), |_| probe.validate());
        settings
    }

    const SETTINGS_KEYS: [&'static str; 10] = [
        "epochs",
        "batch_size",
        "lr",
        "momentum",
        "weight_decay",
        "lr_drops",
        "lr_drop_factor",
        "architecture",
        "hidden",
        "track_clean_noisy",
    ];

    fn schedule(&mut self, t: &Table, path: &str, params: &ModeParams, epochs: usize) -> Option<ModeSchedule> {
        let kind = self.str_req(t, path, "kind")?;
        let schedule = match kind {
            "fixed" => {
                self.check_keys(t, path, &["kind", "scheme"]);
                ModeSchedule::Fixed { scheme: self.scheme_field(t, path, "scheme", params)? }
            }
            "varied" => {
                self.check_keys(t, path, &["kind", "first", "second", "fraction", "switch_epoch"]);
                let first = self.scheme_field(t, path, "first", params);
                let second = self.scheme_field(t, path, "second", params);
                let fraction = self.f64_opt(t, path, "fraction");
                let switch = self.usize_opt(t, path, "switch_epoch");
                let (first, second) = (first?, second?);
                match (fraction, switch) {
                    (Some(f), None) => {
                        if !(0.0..1.0).contains(&f) {
                            self.err(&join(path, "fraction"), "must lie in [0, 1)");
                            return None;
                        }
                        ModeSchedule::varied(first, second, epochs, f)
                    }
                    (None, Some(switch_epoch)) => ModeSchedule::VariedAtEpoch { first, second, switch_epoch },
                    _ => {
                        self.err(path, "varied schedule needs exactly one of `fraction` or `switch_epoch`");
                        return None;
                    }
                }
            }
            "adaptive" => {
                self.check_keys(t, path, &["kind", "shift_threshold", "allow_two_ends", "target"]);
                let d = AdaptiveSchedule::default();
                ModeSchedule::Adaptive(AdaptiveSchedule {
                    p_opt: self.target_density(t, path, DEFAULT_BINS),
                    shift_threshold: self.f64_or(t, path, "shift_threshold", d.shift_threshold),
                    params: *params,
                    allow_two_ends: self.bool_or(t, path, "allow_two_ends", d.allow_two_ends),
                })
            }
            other => {
                self.err(&join(path, "kind"), format!("unknown schedule `{other}` (expected fixed, varied or adaptive)"));
                return None;
            }
        };
        self.validated(path, schedule, |s| s.validate(epochs.max(1)))
    }

    fn train_job(&mut self, root: &Table, params: &ModeParams, seed: u64) -> TrainJob {
        let scenario = self.scenario(root);
        let path = "train";
        let empty = Table::new();
        let t = self.section(root, path, &empty);
        let mut keys = Self::SETTINGS_KEYS.to_vec();
        keys.extend(["bins", "repeats", "runs", "write_datasets"]);
        self.check_keys(t, path, &keys);
        let settings = self.settings(t, path);
        let repeats = self.usize_or(t, path, "repeats", 1);
        if repeats == 0 {
            self.err(&join(path, "repeats"), "must be >= 1");
        }
        let write_datasets = self.bool_or(t, path, "write_datasets", false);
        let mut runs = Vec::new();
        match self.array(t, path, "runs") {
            None => {
                if !t.contains_key("runs") {
                    self.missing(&join(path, "runs"));
                }
            }
            Some(items) => {
                if items.is_empty() {
                    self.err(&join(path, "runs"), "needs at least one run");
                }
                for (i, item) in items.iter().enumerate() {
                    let p = format!("{path}.runs[{i}]");
                    let Value::Table(rt) = item else {
                        self.wrong(&p, "table", item);
                        continue;
                    };
                    self.check_keys(rt, &p, &["name", "schedule"]);
                    let name = self.str_req(rt, &p, "name").map(str::to_string);
                    let schedule = match self.table(rt, &p, "schedule") {
                        Some(st) => self.schedule(st, &join(&p, "schedule"), params, settings.epochs),
                        None => {
                            if !rt.contains_key("schedule") {
                                self.missing(&join(&p, "schedule"));
                            }
                            None
                        }
                    };
                    if let Some(n) = &name {
                        let valid = !n.is_empty() && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
                        if !valid {
                            self.err(&join(&p, "name"), "use only letters, digits, `_` and `-`");
                        } else if runs.iter().any(|r: &NamedSchedule| &r.name == n) {
                            self.err(&join(&p, "name"), format!("duplicate run name `{n}`"));
                        }
                    }
                    if let (Some(name), Some(schedule)) = (name, schedule) {
                        runs.push(NamedSchedule { name, schedule });
                    }
                }
            }
        }
        TrainJob { scenario, settings, runs, seeds: (seed..seed + repeats.max(1) as u64).collect(), write_datasets }
    }

    fn sweep_job(&mut self, root: &Table) -> SweepJob {
        let scenario = self.scenario(root);
        let path = "sweep";
        let empty = Table::new();
        let t = self.section(root, path, &empty);
        let mut keys = Self::SETTINGS_KEYS.to_vec();
        keys.extend(["bins", "boxes", "steps", "budget", "validation_per_class"]);
        self.check_keys(t, path, &keys);
        let settings = self.settings(t, path);
        let boxes = match t.get("boxes") {
            None => stable_boxes(),
            Some(Value::String(s)) => match s.as_str() {
                "stable" => stable_boxes(),
                "alternate" => alternate_boxes(),
                other => {
                    self.err(&join(path, "boxes"), format!("unknown preset `{other}` (expected stable or alternate)"));
                    Vec::new()
                }
            },
            Some(Value::Array(items)) => {
                let mut out = Vec::new();
                for (i, item) in items.iter().enumerate() {
                    let p = format!("{path}.boxes[{i}]");
                    let Value::Table(bt) = item else {
                        self.wrong(&p, "table", item);
                        continue;
                    };
                    self.check_keys(bt, &p, &["mode", "gamma", "alpha"]);
                    let mode = self.str_req(bt, &p, "mode").and_then(|m| self.mode(&join(&p, "mode"), m));
                    if !bt.contains_key("gamma") {
                        self.missing(&join(&p, "gamma"));
                    }
                    if !bt.contains_key("alpha") {
                        self.missing(&join(&p, "alpha"));
                    }
                    let gamma = self.pair(bt, &p, "gamma");
                    let alpha = self.pair(bt, &p, "alpha");
                    if let (Some(mode), Some(gamma), Some(alpha)) = (mode, gamma, alpha) {
                        if alpha.0 < 0.0 || alpha.1 < alpha.0 || gamma.1 < gamma.0 {
                            self.err(&p, "ranges must be ordered and alpha must be >= 0");
                        } else {
                            out.push(ModeBox { mode, gamma, alpha });
                        }
                    }
                }
                out
            }
            Some(other) => {
                self.wrong(&join(path, "boxes"), "preset name or array of tables", other);
                Vec::new()
            }
        };
        let steps = self.usize_or(t, path, "steps", 3);
        if steps == 0 {
            self.err(&join(path, "steps"), "must be >= 1");
        }
        let budget = self.usize_opt(t, path, "budget");
        if budget == Some(0) {
            self.err(&join(path, "budget"), "must be >= 1");
        }
        let validation_per_class = self.usize_or(t, path, "validation_per_class", 100);
        if validation_per_class < 2 {
            self.err(&join(path, "validation_per_class"), "must be >= 2");
        }
        SweepJob { scenario, settings, boxes, steps, budget, validation_per_class }
    }

    fn biasvar_job(&mut self, root: &Table, seed: u64) -> BiasVarJob {
        let d = BiasVarConfig::default();
        let path = "biasvar";
        let empty = Table::new();
        let t = self.table(root, "", path).unwrap_or(&empty);
        self.check_keys(
            t,
            path,
            &["noise_sd", "replicates", "train_size", "degrees", "eval_points", "epsilon", "regions", "target"],
        );
        let regions = match self.table(t, path, "regions") {
            None => d.regions,
            Some(rt) => {
                let p = join(path, "regions");
                self.check_keys(rt, &p, &["easy_end", "hard_start"]);
                RegionBounds {
                    easy_end: self.f64_or(rt, &p, "easy_end", d.regions.easy_end),
                    hard_start: self.f64_or(rt, &p, "hard_start", d.regions.hard_start),
                }
            }
        };
        let target = match self.table(t, path, "target") {
            None => d.target.clone(),
            Some(tt) => {
                let p = join(path, "target");
                match self.str_req(tt, &p, "kind") {
                    Some("polynomial") => {
                        self.check_keys(tt, &p, &["kind", "coeffs"]);
                        if !tt.contains_key("coeffs") {
                            self.missing(&join(&p, "coeffs"));
                        }
                        TargetFunction::Polynomial { coeffs: self.f64_array(tt, &p, "coeffs").unwrap_or_default() }
                    }
                    Some("piecewise") => {
                        let keys = ["kind", "easy_level", "medium_curvature", "hard_amplitude", "hard_frequency", "hard_harmonics"];
                        self.check_keys(tt, &p, &keys);
                        let TargetFunction::Piecewise { easy_level, medium_curvature, hard_amplitude, hard_frequency, hard_harmonics } =
                            TargetFunction::default()
                        else {
                            unreachable!("default target is piecewise")
                        };
                        TargetFunction::Piecewise {
                            easy_level: self.f64_or(tt, &p, "easy_level", easy_level),
                            medium_curvature: self.f64_or(tt, &p, "medium_curvature", medium_curvature),
                            hard_amplitude: self.f64_or(tt, &p, "hard_amplitude", hard_amplitude),
                            hard_frequency: self.f64_or(tt, &p, "hard_frequency", hard_frequency),
                            hard_harmonics: self.usize_or(tt, &p, "hard_harmonics", hard_harmonics),
                        }
                    }
                    Some(other) => {
                        self.err(&join(&p, "kind"), format!("unknown target `{other}` (expected polynomial or piecewise)"));
                        d.target.clone()
                    }
                    None => d.target.clone(),
                }
            }
        };
        let config = BiasVarConfig {
            target,
            noise_sd: self.f64_or(t, path, "noise_sd", d.noise_sd),
            regions,
            degrees: self.usize_array(t, path, "degrees").unwrap_or(d.degrees.clone()),
            replicates: self.usize_or(t, path, "replicates", d.replicates),
            train_size: self.usize_or(t, path, "train_size", d.train_size),
            epsilon: 0.0,
            weighted_region: Region::Hard,
            eval_points: self.usize_or(t, path, "eval_points", d.eval_points),
            seed,
        };
        let config = self.validated(path, config, |c| c.validate()).unwrap_or(d);
        let epsilon = self.f64_or(t, path, "epsilon", 1.0);
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            self.err(&join(path, "epsilon"), "must be finite and >= 0");
        }
        BiasVarJob { config, epsilon }
    }
}
