//! Operational objectives per solved cell: active power losses and voltage
//! band violations, plus the objective grid they populate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::OperationalNetwork;
use crate::powerflow::{InjectionVector, PowerFlowSolution};

pub const DEFAULT_EXTREME_DEV: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Losses,
    Violations,
}

impl Objective {
    pub const ALL: [Objective; 2] = [Objective::Losses, Objective::Violations];

    pub fn name(&self) -> &'static str {
        match self {
            Objective::Losses => "losses",
            Objective::Violations => "violations",
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "losses" => Ok(Objective::Losses),
            "violations" => Ok(Objective::Violations),
            other => Err(format!("unknown objective {other:?}")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ObjectiveError {
    #[error("objectives need a converged power-flow solution")]
    NotConverged,
    #[error("zero_static_baseline: reduction is undefined for a static total of {0}")]
    ZeroStaticBaseline(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoltageBounds {
    pub vmin: f64,
    pub vmax: f64,
}

impl VoltageBounds {
    pub fn new(vmin: f64, vmax: f64) -> Self {
        Self { vmin, vmax }
    }

    /// Strict comparison: the band edges themselves are compliant.
    pub fn violated_by(&self, vm: f64) -> bool {
        vm < self.vmin || vm > self.vmax
    }
}

/// Total active losses in MW: all generation, slack sources included, minus
/// all load.
pub fn compute_losses(
    sol: &PowerFlowSolution,
    inj: &InjectionVector,
    base_mva: f64,
) -> Result<f64, ObjectiveError> {
    if !sol.converged {
        return Err(ObjectiveError::NotConverged);
    }
    let slack: f64 = sol.slack.iter().map(|s| s.power.re).sum();
    let devices: f64 = inj.power.iter().map(|s| s.re).sum();
    Ok((slack + devices) * base_mva)
}

/// Σ r·|I|² over series elements, p.u.
pub fn ohmic_losses(net: &OperationalNetwork, sol: &PowerFlowSolution) -> f64 {
    net.lines
        .iter()
        .map(|line| {
            let dv = sol.voltage(line.from) - sol.voltage(line.to);
            let i = dv / num_complex::Complex64::new(line.r, line.x);
            line.r * i.norm_sqr()
        })
        .sum()
}

/// Number of buses outside their voltage band; a bus counts at most once.
pub fn count_violations(magnitudes: &[f64], bounds: &[VoltageBounds]) -> u32 {
    magnitudes
        .iter()
        .zip(bounds)
        .filter(|(vm, b)| b.violated_by(**vm))
        .count() as u32
}

pub fn has_extreme_deviation(magnitudes: &[f64], extreme_dev: f64) -> bool {
    magnitudes.iter().any(|vm| (vm - 1.0).abs() > extreme_dev)
}

/// Relative reduction from a static to a dynamic total, in percent.
pub fn reduction_pct(static_total: f64, dynamic_total: f64) -> Result<f64, ObjectiveError> {
    if static_total.is_nan() || static_total <= 0.0 {
        return Err(ObjectiveError::ZeroStaticBaseline(static_total));
    }
    Ok(100.0 * (static_total - dynamic_total) / static_total)
}

/// One (configuration, timestep) entry of the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub losses_mw: f64,
    pub violations: u32,
    pub infeasible: bool,
    pub extreme: bool,
    pub min_v: f64,
    pub max_v: f64,
}

impl Cell {
    pub fn infeasible() -> Self {
        Self {
            losses_mw: f64::INFINITY,
            violations: u32::MAX,
            infeasible: true,
            extreme: true,
            min_v: f64::NAN,
            max_v: f64::NAN,
        }
    }
}

pub(crate) fn evaluate_cell(
    sol: &PowerFlowSolution,
    inj: &InjectionVector,
    bounds: &[VoltageBounds],
    base_mva: f64,
    extreme_dev: f64,
) -> Cell {
    let Ok(losses_mw) = compute_losses(sol, inj, base_mva) else {
        return Cell::infeasible();
    };
    let (min_v, max_v) = sol
        .vm
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    Cell {
        losses_mw,
        violations: count_violations(&sol.vm, bounds),
        infeasible: false,
        extreme: has_extreme_deviation(&sol.vm, extreme_dev),
        min_v,
        max_v,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMetadata {
    pub switch_order: Vec<String>,
    /// Bit string of each configuration row.
    pub configs: Vec<String>,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub extreme_dev: f64,
    pub base_mva: f64,
}

/// Objective values indexed by (configuration row, timestep).
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveGrid {
    pub metadata: GridMetadata,
    pub config_count: usize,
    pub timesteps: usize,
    /// Row-major: `cells[config * timesteps + t]`.
    pub cells: Vec<Cell>,
}

impl ObjectiveGrid {
    pub fn cell(&self, config: usize, t: usize) -> &Cell {
        &self.cells[config * self.timesteps + t]
    }

    pub fn row(&self, config: usize) -> &[Cell] {
        &self.cells[config * self.timesteps..(config + 1) * self.timesteps]
    }

    /// Objective value of a cell, `+∞` when infeasible.
    pub fn value(&self, objective: Objective, config: usize, t: usize) -> f64 {
        let cell = self.cell(config, t);
        if cell.infeasible {
            return f64::INFINITY;
        }
        match objective {
            Objective::Losses => cell.losses_mw,
            Objective::Violations => cell.violations as f64,
        }
    }

    pub fn row_feasible(&self, config: usize) -> bool {
        self.row(config).iter().all(|c| !c.infeasible)
    }
}
