//! Ranking of manual-to-reconfigurable switch replacements.
//!
//! Starting from the configuration with the lowest mean losses, every set of
//! at least two switches is made reconfigurable in turn. The switches outside
//! the set stay at their start state, which limits the radial configurations
//! the set can reach. Each timestep then picks its best reachable
//! configuration independently, and the best set per size forms the merit
//! table.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::Configuration;
use crate::objectives::{reduction_pct, Objective, ObjectiveGrid};

pub const DEFAULT_TIMESTEP_HOURS: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvaluationError {
    #[error("no_fully_feasible_configuration: every configuration has an infeasible timestep")]
    NoFullyFeasibleConfiguration,
    #[error(
        "no_feasible_configuration: no reachable configuration is feasible at timestep {timestep}"
    )]
    NoFeasibleConfiguration { timestep: usize },
    #[error("reachable configuration set is empty")]
    EmptyReachable,
    #[error("grid has {grid} configuration rows but {configs} configurations were given")]
    GridMismatch { grid: usize, configs: usize },
}

/// A set of switches upgraded to remote control, as positions in the
/// canonical switch order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReplacementCase {
    pub id: usize,
    pub switches: Vec<usize>,
    pub mask: u64,
}

impl ReplacementCase {
    pub fn size(&self) -> usize {
        self.switches.len()
    }
}

/// All switch subsets of size `max(k_min, 2)..=n`, by size then
/// lexicographically.
pub fn enumerate_cases(n: usize, k_min: usize) -> Vec<ReplacementCase> {
    let mut out = Vec::new();
    for k in k_min.max(2)..=n {
        let mut combo: Vec<usize> = (0..k).collect();
        loop {
            let mask = combo.iter().fold(0u64, |m, &i| m | 1 << i);
            out.push(ReplacementCase {
                id: out.len(),
                switches: combo.clone(),
                mask,
            });
            // Advance to the next k-combination of 0..n.
            let Some(i) = (0..k).rev().find(|&i| combo[i] != i + n - k) else {
                break;
            };
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
        }
    }
    out
}

/// Row with the lowest mean losses among rows feasible at every timestep;
/// ties go to the lower index.
pub fn select_start_config(grid: &ObjectiveGrid) -> Result<usize, EvaluationError> {
    let mut best: Option<(usize, f64)> = None;
    for c in 0..grid.config_count {
        if !grid.row_feasible(c) {
            continue;
        }
        let mean =
            grid.row(c).iter().map(|cell| cell.losses_mw).sum::<f64>() / grid.timesteps as f64;
        if best.is_none_or(|(_, m)| mean < m) {
            best = Some((c, mean));
        }
    }
    best.map(|(c, _)| c)
        .ok_or(EvaluationError::NoFullyFeasibleConfiguration)
}

/// Indices of radial configurations that agree with `start` on every switch
/// outside the replacement set.
pub fn reachable_configs(
    case: &ReplacementCase,
    start: &Configuration,
    radial: &[Configuration],
) -> Vec<usize> {
    let fixed = !case.mask;
    radial
        .iter()
        .enumerate()
        .filter(|(_, cfg)| (cfg.mask() ^ start.mask()) & fixed == 0)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizedPath {
    /// Chosen configuration row per timestep.
    pub path: Vec<usize>,
    /// Sum of the grid values along the path, in grid units (MW or count).
    pub sum: f64,
    pub flips: usize,
}

/// Picks the best reachable configuration at each timestep on its own.
/// Ties keep the previous timestep's choice, then prefer the lowest index.
pub fn optimize_path(
    grid: &ObjectiveGrid,
    objective: Objective,
    reachable: &[usize],
) -> Result<OptimizedPath, EvaluationError> {
    if reachable.is_empty() {
        return Err(EvaluationError::EmptyReachable);
    }
    let mut path = Vec::with_capacity(grid.timesteps);
    let mut sum = 0.0;
    let mut flips = 0;
    let mut previous: Option<usize> = None;
    for t in 0..grid.timesteps {
        let mut best: Option<(usize, f64)> = None;
        for &c in reachable {
            let v = grid.value(objective, c, t);
            if v.is_finite() && best.is_none_or(|(bc, bv)| v < bv || (v == bv && c < bc)) {
                best = Some((c, v));
            }
        }
        let (mut choice, value) =
            best.ok_or(EvaluationError::NoFeasibleConfiguration { timestep: t })?;
        if let Some(p) = previous {
            if p != choice && reachable.contains(&p) && grid.value(objective, p, t) == value {
                choice = p;
            }
            if p != choice {
                flips += 1;
            }
        }
        sum += value;
        path.push(choice);
        previous = Some(choice);
    }
    Ok(OptimizedPath { path, sum, flips })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeReport {
    pub extreme_dev: f64,
    /// Timesteps where every reachable configuration has an extreme deviation
    /// or fails to solve.
    pub failing_timesteps: Vec<usize>,
}

impl EscapeReport {
    pub fn passed(&self) -> bool {
        self.failing_timesteps.is_empty()
    }
}

pub fn extreme_violation_escape(grid: &ObjectiveGrid, reachable: &[usize]) -> EscapeReport {
    let failing_timesteps = (0..grid.timesteps)
        .filter(|&t| {
            !reachable.iter().any(|&c| {
                let cell = grid.cell(c, t);
                !cell.infeasible && !cell.extreme
            })
        })
        .collect();
    EscapeReport {
        extreme_dev: grid.metadata.extreme_dev,
        failing_timesteps,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEvaluation {
    pub case_id: usize,
    pub objective: Objective,
    /// Switch names in canonical order.
    pub rs_set: Vec<String>,
    pub switches: Vec<usize>,
    pub path: Vec<usize>,
    /// MWh for losses, violation count for violations.
    pub total: f64,
    pub flips: usize,
    pub reachable_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeritRow {
    pub k: usize,
    pub case_id: usize,
    pub rs_set: Vec<String>,
    pub total: f64,
    /// `None` when the static baseline is zero.
    pub reduction_pct: Option<f64>,
    /// Improvement over the previous row (or over static for the first row),
    /// divided by the number of switches added.
    pub gain_per_added_switch: f64,
    pub flips: usize,
    pub reachable_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeritTable {
    pub objective: Objective,
    pub unit: String,
    pub static_total: f64,
    pub rows: Vec<MeritRow>,
    /// Every switch reconfigurable.
    pub dynamic_bound: Option<MeritRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cases: Option<Vec<CaseEvaluation>>,
}

impl MeritTable {
    pub fn row(&self, k: usize) -> Option<&MeritRow> {
        self.rows.iter().find(|r| r.k == k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartConfig {
    pub index: usize,
    pub bits: String,
    pub mean_losses_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeritReport {
    pub switch_order: Vec<String>,
    pub switch_names: Vec<String>,
    pub timestep_hours: f64,
    pub start: StartConfig,
    pub tables: Vec<MeritTable>,
    /// Escape check with every switch reconfigurable.
    pub extreme_escape: EscapeReport,
}

impl MeritReport {
    pub fn table(&self, objective: Objective) -> Option<&MeritTable> {
        self.tables.iter().find(|t| t.objective == objective)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationSettings {
    pub timestep_hours: f64,
    pub objectives: Vec<Objective>,
    /// Keep every case evaluation in the report.
    pub full: bool,
}

impl Default for EvaluationSettings {
    fn default() -> Self {
        Self {
            timestep_hours: DEFAULT_TIMESTEP_HOURS,
            objectives: Objective::ALL.to_vec(),
            full: false,
        }
    }
}

fn scale(objective: Objective, sum: f64, hours: f64) -> f64 {
    match objective {
        Objective::Losses => sum * hours,
        Objective::Violations => sum,
    }
}

/// Evaluates one replacement case for one objective.
pub fn evaluate_case(
    grid: &ObjectiveGrid,
    objective: Objective,
    case: &ReplacementCase,
    start: &Configuration,
    radial: &[Configuration],
    switch_names: &[String],
    timestep_hours: f64,
) -> Result<CaseEvaluation, EvaluationError> {
    let reachable = reachable_configs(case, start, radial);
    let opt = optimize_path(grid, objective, &reachable)?;
    Ok(CaseEvaluation {
        case_id: case.id,
        objective,
        rs_set: case
            .switches
            .iter()
            .map(|&i| switch_names[i].clone())
            .collect(),
        switches: case.switches.clone(),
        path: opt.path,
        total: scale(objective, opt.sum, timestep_hours),
        flips: opt.flips,
        reachable_count: reachable.len(),
    })
}

/// Static baseline: the start configuration held over the whole horizon.
pub fn static_total(
    grid: &ObjectiveGrid,
    objective: Objective,
    start: usize,
    timestep_hours: f64,
) -> f64 {
    let sum: f64 = (0..grid.timesteps)
        .map(|t| grid.value(objective, start, t))
        .sum();
    scale(objective, sum, timestep_hours)
}

/// Evaluates every case for each requested objective and keeps the best case
/// per number of replaced switches. Ties go to the lexicographically smallest
/// switch set.
pub fn build_merit_tables(
    grid: &ObjectiveGrid,
    radial: &[Configuration],
    cases: &[ReplacementCase],
    switch_names: &[String],
    settings: &EvaluationSettings,
) -> Result<MeritReport, EvaluationError> {
    if grid.config_count != radial.len() {
        return Err(EvaluationError::GridMismatch {
            grid: grid.config_count,
            configs: radial.len(),
        });
    }
    let start_index = select_start_config(grid)?;
    let start = radial[start_index];
    let n = switch_names.len();
    let hours = settings.timestep_hours;

    let mut tables = Vec::new();
    for &objective in &settings.objectives {
        let baseline = static_total(grid, objective, start_index, hours);
        let mut evaluations: Vec<CaseEvaluation> = cases
            .par_iter()
            .map(|case| evaluate_case(grid, objective, case, &start, radial, switch_names, hours))
            .collect::<Result<_, _>>()?;
        evaluations.sort_by_key(|e| e.case_id);

        let mut best: Vec<Option<&CaseEvaluation>> = vec![None; n + 1];
        for eval in &evaluations {
            let slot = &mut best[eval.switches.len()];
            let better = match slot {
                None => true,
                Some(cur) => {
                    eval.total < cur.total
                        || (eval.total == cur.total && eval.switches < cur.switches)
                }
            };
            if better {
                *slot = Some(eval);
            }
        }

        let mut rows = Vec::new();
        let mut previous = (0usize, baseline);
        for eval in best.iter().flatten() {
            let k = eval.switches.len();
            let added = if previous.0 == 0 { k } else { k - previous.0 };
            rows.push(MeritRow {
                k,
                case_id: eval.case_id,
                rs_set: eval.rs_set.clone(),
                total: eval.total,
                reduction_pct: reduction_pct(baseline, eval.total).ok(),
                gain_per_added_switch: (previous.1 - eval.total) / added as f64,
                flips: eval.flips,
                reachable_count: eval.reachable_count,
            });
            previous = (k, eval.total);
        }

        let all = ReplacementCase {
            id: usize::MAX,
            switches: (0..n).collect(),
            mask: if n == 64 { u64::MAX } else { (1u64 << n) - 1 },
        };
        let dynamic_bound = if n == 0 {
            None
        } else {
            let eval = match rows.iter().find(|r| r.k == n) {
                Some(row) => row.clone(),
                None => {
                    let e =
                        evaluate_case(grid, objective, &all, &start, radial, switch_names, hours)?;
                    MeritRow {
                        k: n,
                        case_id: e.case_id,
                        rs_set: e.rs_set,
                        total: e.total,
                        reduction_pct: reduction_pct(baseline, e.total).ok(),
                        gain_per_added_switch: (baseline - e.total) / n as f64,
                        flips: e.flips,
                        reachable_count: e.reachable_count,
                    }
                }
            };
            Some(eval)
        };

        tables.push(MeritTable {
            objective,
            unit: match objective {
                Objective::Losses => "MWh".into(),
                Objective::Violations => "count".into(),
            },
            static_total: baseline,
            rows,
            dynamic_bound,
            cases: settings.full.then_some(evaluations),
        });
    }

    let everything: Vec<usize> = (0..radial.len()).collect();
    let start_mean = grid
        .row(start_index)
        .iter()
        .map(|c| c.losses_mw)
        .sum::<f64>()
        / grid.timesteps as f64;

    Ok(MeritReport {
        switch_order: grid.metadata.switch_order.clone(),
        switch_names: switch_names.to_vec(),
        timestep_hours: hours,
        start: StartConfig {
            index: start_index,
            bits: start.to_bits(),
            mean_losses_mw: start_mean,
        },
        tables,
        extreme_escape: extreme_violation_escape(grid, &everything),
    })
}
