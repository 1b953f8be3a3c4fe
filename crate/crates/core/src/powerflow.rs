//! AC power flow by full Newton–Raphson in polar coordinates, and the batch
//! sweep over every (radial configuration, timestep) cell.
//!
//! Each island is solved on its own with its feeder head as the slack bus
//! (`V = 1∠0`); all other buses are PQ. Every solve starts flat.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{apply_configuration, ApplyError, NetworkCase, OperationalNetwork};
use crate::objectives::{self, Cell, GridMetadata, ObjectiveGrid, VoltageBounds};
use crate::profile::{kw_to_pu, ProfileSet};
use crate::radial::RadialSet;

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ITERATIONS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Largest acceptable |ΔS| at any PQ bus, p.u.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PowerFlowError {
    #[error("no_slack_in_island: island {island} has no feeder-head bus")]
    NoSlackInIsland { island: usize },
    #[error("island {island} has {count} feeder-head buses")]
    MultipleSlacks { island: usize, count: usize },
    #[error("non_convergence: mismatch {mismatch:e} p.u. after {iterations} iterations")]
    NonConvergence { iterations: usize, mismatch: f64 },
    #[error("injection vector has {got} entries for {expected} buses")]
    InjectionLength { expected: usize, got: usize },
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("profile key {key} used by {device} is missing from the profile set")]
    MissingProfileKey { key: String, device: String },
    #[error("radial set is empty")]
    EmptyRadialSet,
    #[error(transparent)]
    Apply(#[from] ApplyError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
}

/// Complex power injected at each bus for one timestep, p.u.
/// Loads inject negative power, generation positive.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionVector {
    pub power: Vec<Complex64>,
}

impl InjectionVector {
    pub fn zeros(buses: usize) -> Self {
        Self {
            power: vec![Complex64::new(0.0, 0.0); buses],
        }
    }

    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }
}

struct DeviceFeed<'a> {
    bus: usize,
    column: &'a [f64],
    tan_phi: f64,
    sign: f64,
}

/// Maps profile columns onto buses; built once per case and profile set.
pub struct InjectionBuilder<'a> {
    buses: usize,
    base_mva: f64,
    feeds: Vec<DeviceFeed<'a>>,
    timesteps: usize,
}

impl<'a> InjectionBuilder<'a> {
    pub fn new(case: &NetworkCase, profiles: &'a ProfileSet) -> Result<Self, GridError> {
        let index = case.bus_index();
        let mut feeds = Vec::with_capacity(case.loads.len() + case.generators.len());
        for (devices, sign) in [(&case.loads, -1.0), (&case.generators, 1.0)] {
            for dev in devices {
                let column = profiles.column(&dev.profile_key).ok_or_else(|| {
                    GridError::MissingProfileKey {
                        key: dev.profile_key.clone(),
                        device: dev.id.clone(),
                    }
                })?;
                feeds.push(DeviceFeed {
                    bus: index[dev.bus.as_str()],
                    column,
                    tan_phi: dev.reactive_for(1.0),
                    sign,
                });
            }
        }
        Ok(Self {
            buses: case.buses.len(),
            base_mva: case.base_mva,
            feeds,
            timesteps: profiles.timesteps(),
        })
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn at(&self, t: usize) -> InjectionVector {
        let mut inj = InjectionVector::zeros(self.buses);
        for feed in &self.feeds {
            let p = kw_to_pu(feed.column[t], self.base_mva);
            inj.power[feed.bus] += feed.sign * Complex64::new(p, p * feed.tan_phi);
        }
        inj
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlackInjection {
    pub bus: usize,
    /// Power delivered by the feeder source, excluding devices on the slack bus.
    pub power: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    /// One entry per island, in island order.
    pub slack: Vec<SlackInjection>,
    pub converged: bool,
    /// Largest iteration count over all islands.
    pub iterations: usize,
    pub max_mismatch: f64,
}

impl PowerFlowSolution {
    pub fn voltage(&self, bus: usize) -> Complex64 {
        Complex64::from_polar(self.vm[bus], self.va[bus])
    }

    pub fn voltages(&self) -> Vec<Complex64> {
        (0..self.vm.len()).map(|i| self.voltage(i)).collect()
    }
}

struct IslandSystem {
    buses: Vec<usize>,
    slack_local: usize,
    ybus: DMatrix<Complex64>,
}

/// An operational network with per-island admittance matrices assembled.
pub struct PreparedNetwork {
    bus_count: usize,
    islands: Vec<IslandSystem>,
}

impl PreparedNetwork {
    pub fn new(net: &OperationalNetwork) -> Result<Self, PowerFlowError> {
        let mut local = vec![0usize; net.bus_count];
        let mut islands = Vec::with_capacity(net.islands.len());
        for (k, island) in net.islands.iter().enumerate() {
            let slack = match island.feeder_heads.len() {
                0 => return Err(PowerFlowError::NoSlackInIsland { island: k }),
                1 => island.feeder_heads[0],
                count => return Err(PowerFlowError::MultipleSlacks { island: k, count }),
            };
            for (i, &bus) in island.buses.iter().enumerate() {
                local[bus] = i;
            }
            let m = island.buses.len();
            islands.push(IslandSystem {
                buses: island.buses.clone(),
                slack_local: local[slack],
                ybus: DMatrix::zeros(m, m),
            });
        }
        for line in &net.lines {
            let sys = &mut islands[net.bus_island[line.from]];
            let (f, t) = (local[line.from], local[line.to]);
            let y = Complex64::new(1.0, 0.0) / Complex64::new(line.r, line.x);
            let half_b = Complex64::new(0.0, line.b / 2.0);
            sys.ybus[(f, f)] += y + half_b;
            sys.ybus[(t, t)] += y + half_b;
            sys.ybus[(f, t)] -= y;
            sys.ybus[(t, f)] -= y;
        }
        Ok(Self {
            bus_count: net.bus_count,
            islands,
        })
    }

    pub fn solve(
        &self,
        inj: &InjectionVector,
        settings: &SolverSettings,
    ) -> Result<PowerFlowSolution, PowerFlowError> {
        if inj.len() != self.bus_count {
            return Err(PowerFlowError::InjectionLength {
                expected: self.bus_count,
                got: inj.len(),
            });
        }
        let mut sol = PowerFlowSolution {
            vm: vec![1.0; self.bus_count],
            va: vec![0.0; self.bus_count],
            slack: Vec::with_capacity(self.islands.len()),
            converged: true,
            iterations: 0,
            max_mismatch: 0.0,
        };
        for sys in &self.islands {
            let spec: Vec<Complex64> = sys.buses.iter().map(|&b| inj.power[b]).collect();
            let out = newton_raphson(sys, &spec, settings)?;
            for (i, &bus) in sys.buses.iter().enumerate() {
                sol.vm[bus] = out.vm[i];
                sol.va[bus] = out.va[i];
            }
            sol.slack.push(SlackInjection {
                bus: sys.buses[sys.slack_local],
                power: out.slack_power - spec[sys.slack_local],
            });
            sol.iterations = sol.iterations.max(out.iterations);
            sol.max_mismatch = sol.max_mismatch.max(out.mismatch);
        }
        Ok(sol)
    }
}

struct IslandSolution {
    vm: Vec<f64>,
    va: Vec<f64>,
    slack_power: Complex64,
    iterations: usize,
    mismatch: f64,
}

fn newton_raphson(
    sys: &IslandSystem,
    spec: &[Complex64],
    settings: &SolverSettings,
) -> Result<IslandSolution, PowerFlowError> {
    let m = sys.buses.len();
    let pq: Vec<usize> = (0..m).filter(|&i| i != sys.slack_local).collect();
    let npq = pq.len();
    let y = &sys.ybus;

    let mut vm = vec![1.0; m];
    let mut va = vec![0.0; m];
    let mut v: Vec<Complex64> = vec![Complex64::new(1.0, 0.0); m];
    let mut iterations = 0;

    loop {
        let current: Vec<Complex64> = (0..m)
            .map(|i| (0..m).map(|k| y[(i, k)] * v[k]).sum())
            .collect();
        let mut rhs = DVector::zeros(2 * npq);
        let mut mismatch: f64 = 0.0;
        for (r, &i) in pq.iter().enumerate() {
            let d = spec[i] - v[i] * current[i].conj();
            rhs[r] = d.re;
            rhs[npq + r] = d.im;
            mismatch = mismatch.max(d.norm());
        }
        if !mismatch.is_finite() {
            return Err(PowerFlowError::NonConvergence {
                iterations,
                mismatch,
            });
        }
        if mismatch <= settings.tolerance {
            let s = sys.slack_local;
            return Ok(IslandSolution {
                vm,
                va,
                slack_power: v[s] * current[s].conj(),
                iterations,
                mismatch,
            });
        }
        if iterations >= settings.max_iterations {
            return Err(PowerFlowError::NonConvergence {
                iterations,
                mismatch,
            });
        }

        // dS/dθ = j·V_i·conj(δ_ik·I_i − Y_ik·V_k)
        // dS/d|V| = V_i·conj(Y_ik·V_k/|V_k|) + δ_ik·conj(I_i)·V_k/|V_k|
        let mut jac = DMatrix::zeros(2 * npq, 2 * npq);
        for (r, &i) in pq.iter().enumerate() {
            for (c, &k) in pq.iter().enumerate() {
                let yv = y[(i, k)] * v[k];
                let vn = v[k] / vm[k];
                let mut d_theta = -yv;
                let mut d_mag = v[i] * (y[(i, k)] * vn).conj();
                if i == k {
                    d_theta += current[i];
                    d_mag += current[i].conj() * vn;
                }
                let d_theta = Complex64::new(0.0, 1.0) * v[i] * d_theta.conj();
                jac[(r, c)] = d_theta.re;
                jac[(r, npq + c)] = d_mag.re;
                jac[(npq + r, c)] = d_theta.im;
                jac[(npq + r, npq + c)] = d_mag.im;
            }
        }
        let step = jac.lu().solve(&rhs).ok_or(PowerFlowError::NonConvergence {
            iterations,
            mismatch,
        })?;
        for (r, &i) in pq.iter().enumerate() {
            va[i] += step[r];
            vm[i] += step[npq + r];
            v[i] = Complex64::from_polar(vm[i], va[i]);
        }
        iterations += 1;
    }
}

/// Solves one network for one set of injections with default settings.
pub fn solve_ac(
    net: &OperationalNetwork,
    inj: &InjectionVector,
) -> Result<PowerFlowSolution, PowerFlowError> {
    solve_ac_with(net, inj, &SolverSettings::default())
}

pub fn solve_ac_with(
    net: &OperationalNetwork,
    inj: &InjectionVector,
    settings: &SolverSettings,
) -> Result<PowerFlowSolution, PowerFlowError> {
    PreparedNetwork::new(net)?.solve(inj, settings)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    pub solver: SolverSettings,
    /// Deviation from 1 p.u. that counts as an extreme violation.
    pub extreme_dev: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            solver: SolverSettings::default(),
            extreme_dev: objectives::DEFAULT_EXTREME_DEV,
        }
    }
}

/// Solves every (configuration, timestep) cell and records its objectives.
///
/// Cells are independent and run on the current rayon pool; results land in
/// a grid indexed by `config * timesteps + t`, so output does not depend on
/// scheduling. Cells whose power flow fails to converge are marked infeasible.
pub fn run_grid(
    case: &NetworkCase,
    radial: &RadialSet,
    profiles: &ProfileSet,
    options: &GridOptions,
) -> Result<ObjectiveGrid, GridError> {
    if radial.is_empty() {
        return Err(GridError::EmptyRadialSet);
    }
    let builder = InjectionBuilder::new(case, profiles)?;
    let timesteps = builder.timesteps();
    let bounds: Vec<VoltageBounds> = case
        .buses
        .iter()
        .map(|b| VoltageBounds::new(b.vmin, b.vmax))
        .collect();

    let networks: Vec<PreparedNetwork> = radial
        .configs
        .iter()
        .map(|cfg| {
            let net = apply_configuration(case, &radial.switch_order, cfg)?;
            Ok(PreparedNetwork::new(&net)?)
        })
        .collect::<Result<_, GridError>>()?;

    let cells: Vec<Cell> = (0..networks.len() * timesteps)
        .into_par_iter()
        .map(|idx| {
            let (c, t) = (idx / timesteps, idx % timesteps);
            let inj = builder.at(t);
            match networks[c].solve(&inj, &options.solver) {
                Ok(sol) => objectives::evaluate_cell(
                    &sol,
                    &inj,
                    &bounds,
                    case.base_mva,
                    options.extreme_dev,
                ),
                Err(_) => Cell::infeasible(),
            }
        })
        .collect();

    Ok(ObjectiveGrid {
        metadata: GridMetadata {
            switch_order: radial.switch_order.clone(),
            configs: radial.configs.iter().map(|c| c.to_bits()).collect(),
            tolerance: options.solver.tolerance,
            max_iterations: options.solver.max_iterations,
            extreme_dev: options.extreme_dev,
            base_mva: case.base_mva,
        },
        config_count: networks.len(),
        timesteps,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{parse_case, Configuration};

    fn two_bus() -> NetworkCase {
        parse_case(
            r#"{"base_mva": 1,
                "buses": [{"id": "S", "is_feeder_head": true}, {"id": "L"}],
                "branches": [{"id": "l", "from": "S", "to": "L", "r": 0.01, "x": 0.05}]}"#,
        )
        .unwrap()
    }

    fn operational(case: &NetworkCase) -> OperationalNetwork {
        apply_configuration(case, &[], &Configuration::all_open(0)).unwrap()
    }

    /// Fixed-point iteration V2 = (conj(S2)/conj(V2) + y·V1) / y, V1 = 1.
    fn gauss_seidel_two_bus(z: Complex64, s_load: Complex64) -> Complex64 {
        let y = Complex64::new(1.0, 0.0) / z;
        let s_inj = -s_load;
        let mut v2 = Complex64::new(1.0, 0.0);
        for _ in 0..10_000 {
            let next = (s_inj.conj() / v2.conj() + y) / y;
            let done = (next - v2).norm() < 1e-10;
            v2 = next;
            if done {
                break;
            }
        }
        v2
    }

    #[test]
    fn zero_injection_is_flat() {
        let case = two_bus();
        let net = operational(&case);
        let sol = solve_ac(&net, &InjectionVector::zeros(2)).unwrap();
        assert!(sol.iterations <= 1);
        assert_eq!(sol.vm, vec![1.0, 1.0]);
        assert_eq!(sol.va, vec![0.0, 0.0]);
        assert_eq!(sol.slack[0].power, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn two_bus_matches_fixed_point_oracle() {
        let case = two_bus();
        let net = operational(&case);
        let load = Complex64::new(0.5, 0.2);
        let mut inj = InjectionVector::zeros(2);
        inj.power[1] = -load;
        let sol = solve_ac(&net, &inj).unwrap();
        let oracle = gauss_seidel_two_bus(Complex64::new(0.01, 0.05), load);
        assert!((sol.voltage(1) - oracle).norm() < 1e-6);
        assert!(sol.max_mismatch <= DEFAULT_TOLERANCE);
        assert_eq!(sol.vm[0], 1.0);
        assert_eq!(sol.va[0], 0.0);
    }

    #[test]
    fn missing_slack_is_reported() {
        let case = parse_case(
            r#"{"base_mva": 1,
                "buses": [{"id": "S", "is_feeder_head": true}, {"id": "L"}],
                "switches": [{"id": "s", "from": "S", "to": "L"}]}"#,
        )
        .unwrap();
        let net = apply_configuration(&case, &["s".into()], &Configuration::all_open(1)).unwrap();
        assert_eq!(
            solve_ac(&net, &InjectionVector::zeros(2)).unwrap_err(),
            PowerFlowError::NoSlackInIsland { island: 1 }
        );
    }

    #[test]
    fn overload_does_not_converge() {
        let case = two_bus();
        let net = operational(&case);
        let mut inj = InjectionVector::zeros(2);
        inj.power[1] = Complex64::new(-50.0, -20.0);
        assert!(matches!(
            solve_ac(&net, &inj),
            Err(PowerFlowError::NonConvergence { .. })
        ));
    }

    #[test]
    fn injection_builder_signs() {
        let case = parse_case(
            r#"{"base_mva": 2,
                "buses": [{"id": "S", "is_feeder_head": true}, {"id": "L"}],
                "branches": [{"id": "l", "from": "S", "to": "L", "r": 0.01, "x": 0.05}],
                "loads": [{"id": "d", "bus": "L", "profile_key": "res", "power_factor": 0.8}],
                "generators": [{"id": "g", "bus": "L", "profile_key": "pv", "power_factor": 1.0}]}"#,
        )
        .unwrap();
        let profiles = ProfileSet::new(
            vec!["res".into(), "pv".into()],
            vec![vec![400.0], vec![100.0]],
        )
        .unwrap();
        let inj = InjectionBuilder::new(&case, &profiles).unwrap().at(0);
        assert!((inj.power[1] - Complex64::new(-0.15, -0.15)).norm() < 1e-12);
        assert_eq!(inj.power[0], Complex64::new(0.0, 0.0));

        let missing = ProfileSet::constant(&["res"], 1.0, 1).unwrap();
        assert!(matches!(
            InjectionBuilder::new(&case, &missing),
            Err(GridError::MissingProfileKey { .. })
        ));
    }
}
