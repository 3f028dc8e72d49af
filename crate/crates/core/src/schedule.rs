//! Which weighting scheme is active at each epoch, and grid search over
//! FlexW hyper-parameter boxes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::difficulty::{density_distance, tau_from_density, BinnedDensity, DifficultyProfile, TargetDensity};
use crate::error::{Error, Result};
use crate::weighting::{PriorityMode, WeightScheme};

/// FlexW `(gamma, alpha)` used for each priority mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeParams {
    pub easy: (f64, f64),
    pub medium: (f64, f64),
    pub hard: (f64, f64),
    pub two_ends: (f64, f64),
}

impl Default for ModeParams {
    fn default() -> Self {
        ModeParams { easy: (-0.5, 0.15), medium: (0.5, 0.58), hard: (0.5, 0.15), two_ends: (-0.5, 0.58) }
    }
}

impl ModeParams {
    pub fn scheme_for(&self, mode: PriorityMode) -> WeightScheme {
        let (gamma, alpha) = match mode {
            PriorityMode::EasyFirst => self.easy,
            PriorityMode::MediumFirst => self.medium,
            PriorityMode::HardFirst => self.hard,
            PriorityMode::TwoEndsFirst => self.two_ends,
            PriorityMode::Flat => return WeightScheme::Uniform,
        };
        WeightScheme::FlexW { gamma, alpha }
    }
}

/// A rectangle of `(gamma, alpha)` values for one mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeBox {
    pub mode: PriorityMode,
    pub gamma: (f64, f64),
    pub alpha: (f64, f64),
}

/// Hyper-parameter boxes within which FlexW performs stably, one per mode.
pub fn stable_boxes() -> Vec<ModeBox> {
    vec![
        ModeBox { mode: PriorityMode::EasyFirst, gamma: (-0.6, -0.2), alpha: (0.1, 0.4) },
        ModeBox { mode: PriorityMode::MediumFirst, gamma: (0.2, 0.6), alpha: (0.4, 0.8) },
        ModeBox { mode: PriorityMode::HardFirst, gamma: (0.2, 0.6), alpha: (0.1, 0.4) },
        ModeBox { mode: PriorityMode::TwoEndsFirst, gamma: (-0.6, -0.2), alpha: (0.4, 0.8) },
    ]
}

/// The alternative easy-first and hard-first boxes with a large shift.
pub fn alternate_boxes() -> Vec<ModeBox> {
    vec![
        ModeBox { mode: PriorityMode::EasyFirst, gamma: (0.2, 0.6), alpha: (0.9, 1.2) },
        ModeBox { mode: PriorityMode::HardFirst, gamma: (-0.6, -0.2), alpha: (0.9, 1.2) },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveSchedule {
    pub p_opt: TargetDensity,
    /// Total-variation distance between consecutive epoch profiles that
    /// triggers re-inference.
    pub shift_threshold: f64,
    pub params: ModeParams,
    /// Two-ends-first is not a candidate unless enabled.
    pub allow_two_ends: bool,
}

impl Default for AdaptiveSchedule {
    fn default() -> Self {
        AdaptiveSchedule {
            p_opt: TargetDensity::Uniform,
            shift_threshold: 0.2,
            params: ModeParams::default(),
            allow_two_ends: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModeSchedule {
    Fixed { scheme: WeightScheme },
    /// `first` for epochs before `switch_epoch`, `second` from it on.
    VariedAtEpoch { first: WeightScheme, second: WeightScheme, switch_epoch: usize },
    Adaptive(AdaptiveSchedule),
    /// Declares a sweep; must be expanded into fixed runs before training.
    GridSearch { boxes: Vec<ModeBox>, steps: usize },
}

impl ModeSchedule {
    pub fn validate(&self, epochs: usize) -> Result<()> {
        match self {
            ModeSchedule::Fixed { scheme } => scheme.validate(),
            ModeSchedule::VariedAtEpoch { first, second, switch_epoch } => {
                first.validate()?;
                second.validate()?;
                if *switch_epoch < 1 || *switch_epoch >= epochs.max(2) {
                    return Err(Error::config(format!(
                        "switch_epoch {switch_epoch} must lie in [1, {epochs})"
                    )));
                }
                Ok(())
            }
            ModeSchedule::Adaptive(a) => {
                if !(a.shift_threshold > 0.0 && a.shift_threshold <= 1.0) {
                    return Err(Error::config("shift_threshold must lie in (0, 1]"));
                }
                for mode in [
                    PriorityMode::EasyFirst,
                    PriorityMode::MediumFirst,
                    PriorityMode::HardFirst,
                    PriorityMode::TwoEndsFirst,
                ] {
                    a.params.scheme_for(mode).validate()?;
                }
                Ok(())
            }
            ModeSchedule::GridSearch { boxes, steps } => {
                if boxes.is_empty() {
                    return Err(Error::config("grid search needs at least one box"));
                }
                if *steps < 1 {
                    return Err(Error::config("grid search needs steps >= 1"));
                }
                Ok(())
            }
        }
    }

    /// Switch epoch that keeps `first` for the leading `fraction` of training.
    pub fn varied(first: WeightScheme, second: WeightScheme, epochs: usize, fraction: f64) -> Self {
        let switch_epoch = ((fraction * epochs as f64).floor() as usize + 1).clamp(1, epochs.saturating_sub(1).max(1));
        ModeSchedule::VariedAtEpoch { first, second, switch_epoch }
    }
}

/// What an adaptive schedule remembers between epochs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScheduleState {
    pub previous: Option<BinnedDensity>,
    pub mode: Option<PriorityMode>,
}

/// The scheme active at `epoch` (1-based) and the state to carry forward.
///
/// An adaptive schedule re-infers the mode from `tau` when no mode has been
/// inferred yet or when the difficulty density moved by more than the
/// threshold since the previous epoch. Before any profile exists, and when
/// inference is ambiguous or picks an excluded mode, the current mode
/// stands; the initial mode is easy-first.
pub fn mode_at_epoch(
    schedule: &ModeSchedule,
    epoch: usize,
    latest: Option<&DifficultyProfile>,
    state: &ScheduleState,
) -> Result<(WeightScheme, ScheduleState)> {
    if epoch < 1 {
        return Err(Error::domain("epochs are 1-based"));
    }
    match schedule {
        ModeSchedule::Fixed { scheme } => Ok((scheme.clone(), state.clone())),
        ModeSchedule::VariedAtEpoch { first, second, switch_epoch } => {
            let s = if epoch < *switch_epoch { first } else { second };
            Ok((s.clone(), state.clone()))
        }
        ModeSchedule::Adaptive(a) => {
            let mut next = state.clone();
            let current = state.mode.unwrap_or(PriorityMode::EasyFirst);
            let Some(profile) = latest else {
                next.mode = Some(current);
                return Ok((a.params.scheme_for(current), next));
            };
            let hist = &profile.histogram;
            let reinfer = match (&state.mode, &state.previous) {
                (None, _) | (_, None) => true,
                (Some(_), Some(prev)) => density_distance(prev, hist)? > a.shift_threshold,
            };
            let mut mode = current;
            if reinfer {
                let tau = tau_from_density(&a.p_opt, hist)?;
                if let Some(m) = tau.inferred_mode {
                    if m != PriorityMode::TwoEndsFirst || a.allow_two_ends {
                        mode = m;
                    }
                }
            }
            next.mode = Some(mode);
            next.previous = Some(hist.clone());
            Ok((a.params.scheme_for(mode), next))
        }
        ModeSchedule::GridSearch { .. } => Err(Error::config(
            "a grid-search schedule must be expanded into fixed runs before training",
        )),
    }
}

fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![lo];
    }
    (0..steps)
        .map(|i| if i + 1 == steps { hi } else { lo + (hi - lo) * i as f64 / (steps - 1) as f64 })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub mode: PriorityMode,
    pub gamma: f64,
    pub alpha: f64,
}

impl GridCell {
    pub fn scheme(&self) -> WeightScheme {
        WeightScheme::FlexW { gamma: self.gamma, alpha: self.alpha }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub mode: PriorityMode,
    pub gamma: f64,
    pub alpha: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: GridRow,
    /// Best row of each mode present in the table.
    pub best_per_mode: Vec<GridRow>,
    pub table: Vec<GridRow>,
    /// False when the budget ran out before the grid was covered.
    pub complete: bool,
}

/// Cartesian grid with `steps` points per axis in every box, in box order.
pub fn grid_cells(boxes: &[ModeBox], steps: usize) -> Vec<GridCell> {
    boxes
        .iter()
        .flat_map(|b| {
            let alphas = linspace(b.alpha.0, b.alpha.1, steps);
            linspace(b.gamma.0, b.gamma.1, steps).into_iter().flat_map(move |gamma| {
                let alphas = alphas.clone();
                alphas.into_iter().map(move |alpha| GridCell { mode: b.mode, gamma, alpha })
            })
        })
        .collect()
}

/// Higher accuracy wins; ties go to smaller |gamma|, then smaller alpha.
fn better(a: &GridRow, b: &GridRow) -> bool {
    if a.val_accuracy != b.val_accuracy {
        return a.val_accuracy > b.val_accuracy;
    }
    if a.gamma.abs() != b.gamma.abs() {
        return a.gamma.abs() < b.gamma.abs();
    }
    a.alpha < b.alpha
}

fn argbest<'a>(rows: impl Iterator<Item = &'a GridRow>) -> Option<GridRow> {
    rows.fold(None, |acc: Option<GridRow>, r| match acc {
        Some(b) if !better(r, &b) => Some(b),
        _ => Some(*r),
    })
}

/// Evaluates every cell (concurrently, on the current rayon pool) and
/// returns the table in cell order together with its argmax.
pub fn grid_search<F>(boxes: &[ModeBox], steps: usize, budget: Option<usize>, runner: F) -> Result<SearchResult>
where
    F: Fn(&GridCell) -> Result<f64> + Sync,
{
    if steps < 1 {
        return Err(Error::config("steps must be >= 1"));
    }
    let cells = grid_cells(boxes, steps);
    if cells.is_empty() {
        return Err(Error::Empty("grid"));
    }
    let limit = budget.unwrap_or(cells.len()).min(cells.len());
    if limit == 0 {
        return Err(Error::Empty("evaluation budget"));
    }
    let scores: Vec<f64> = cells[..limit].par_iter().map(&runner).collect::<Result<_>>()?;
    let table: Vec<GridRow> = cells[..limit]
        .iter()
        .zip(scores)
        .map(|(c, val_accuracy)| GridRow { mode: c.mode, gamma: c.gamma, alpha: c.alpha, val_accuracy })
        .collect();
    let best = argbest(table.iter()).ok_or(Error::Empty("grid"))?;
    let mut modes: Vec<PriorityMode> = Vec::new();
    for r in &table {
        if !modes.contains(&r.mode) {
            modes.push(r.mode);
        }
    }
    let best_per_mode = modes
        .iter()
        .filter_map(|m| argbest(table.iter().filter(|r| r.mode == *m)))
        .collect();
    Ok(SearchResult { best, best_per_mode, table, complete: limit == cells.len() })
}
