//! Network case model: buses, branches, switches and profile-driven devices.
//!
//! A [`NetworkCase`] is loaded from a JSON document, validated once, and is
//! immutable afterwards. Applying a [`Configuration`] yields an
//! [`OperationalNetwork`] whose islands are ready for power flow.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsu::DisjointSet;

/// Series reactance (p.u.) used to realise a closed switch as a branch.
pub const CLOSED_SWITCH_X: f64 = 1e-5;

pub const DEFAULT_VMIN: f64 = 0.95;
pub const DEFAULT_VMAX: f64 = 1.05;
pub const DEFAULT_POWER_FACTOR: f64 = 0.95;

fn default_vmin() -> f64 {
    DEFAULT_VMIN
}

fn default_vmax() -> f64 {
    DEFAULT_VMAX
}

fn default_power_factor() -> f64 {
    DEFAULT_POWER_FACTOR
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: String,
    #[serde(default = "default_vmin")]
    pub vmin: f64,
    #[serde(default = "default_vmax")]
    pub vmax: f64,
    /// Transformer secondary acting as the reference bus of its feeder.
    #[serde(default)]
    pub is_feeder_head: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub id: String,
    pub from: String,
    pub to: String,
    pub r: f64,
    pub x: f64,
    /// Total line-charging susceptance, split evenly between both ends.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub b: f64,
}

/// An ideal switch between two buses. Carries no impedance of its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Switch {
    pub id: String,
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
}

impl Switch {
    pub fn display_name(&self) -> &str {
        if self.name.is_empty() {
            &self.id
        } else {
            &self.name
        }
    }
}

/// A load or generator whose active power follows a profile column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Device {
    pub id: String,
    pub bus: String,
    pub profile_key: String,
    #[serde(default = "default_power_factor")]
    pub power_factor: f64,
}

impl Device {
    /// Reactive power accompanying `p` at this device's power factor.
    pub fn reactive_for(&self, p: f64) -> f64 {
        p * self.power_factor.acos().tan()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    #[serde(default)]
    pub branches: Vec<Branch>,
    #[serde(default)]
    pub switches: Vec<Switch>,
    #[serde(default)]
    pub loads: Vec<Device>,
    #[serde(default)]
    pub generators: Vec<Device>,
}

/// Machine-readable reason a case failed validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationCode {
    DanglingBusRef,
    DuplicateId,
    NoFeederHead,
    DisconnectedCase,
    InvalidVoltageBounds,
    SelfLoop,
    ZeroImpedance,
    InvalidPowerFactor,
    InvalidBaseMva,
    NonFiniteValue,
    CoupledFeederHeads,
}

impl ValidationCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ValidationCode::DanglingBusRef => "dangling_bus_ref",
            ValidationCode::DuplicateId => "duplicate_id",
            ValidationCode::NoFeederHead => "no_feeder_head",
            ValidationCode::DisconnectedCase => "disconnected_case",
            ValidationCode::InvalidVoltageBounds => "invalid_voltage_bounds",
            ValidationCode::SelfLoop => "self_loop",
            ValidationCode::ZeroImpedance => "zero_impedance",
            ValidationCode::InvalidPowerFactor => "invalid_power_factor",
            ValidationCode::InvalidBaseMva => "invalid_base_mva",
            ValidationCode::NonFiniteValue => "non_finite_value",
            ValidationCode::CoupledFeederHeads => "coupled_feeder_heads",
        }
    }
}

impl fmt::Display for ValidationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("cannot read case: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed case document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid case [{code}]: {message}")]
    Validation {
        code: ValidationCode,
        message: String,
    },
}

impl CaseError {
    pub fn code(&self) -> Option<ValidationCode> {
        match self {
            CaseError::Validation { code, .. } => Some(*code),
            _ => None,
        }
    }
}

fn invalid(code: ValidationCode, message: impl Into<String>) -> CaseError {
    CaseError::Validation {
        code,
        message: message.into(),
    }
}

/// Reads and validates a JSON case file.
pub fn load_case(path: impl AsRef<Path>) -> Result<NetworkCase, CaseError> {
    let file = std::fs::File::open(path)?;
    read_case(std::io::BufReader::new(file))
}

/// Parses and validates a JSON case from any byte stream.
pub fn read_case(reader: impl Read) -> Result<NetworkCase, CaseError> {
    let case: NetworkCase = serde_json::from_reader(reader)?;
    case.validate()?;
    Ok(case)
}

pub fn parse_case(text: &str) -> Result<NetworkCase, CaseError> {
    read_case(text.as_bytes())
}

impl NetworkCase {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case serialization is infallible")
    }

    /// Bus id to position in `buses`.
    pub fn bus_index(&self) -> HashMap<&str, usize> {
        self.buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id.as_str(), i))
            .collect()
    }

    pub fn feeder_heads(&self) -> impl Iterator<Item = usize> + '_ {
        self.buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.is_feeder_head)
            .map(|(i, _)| i)
    }

    pub fn switch_by_id(&self, id: &str) -> Option<&Switch> {
        self.switches.iter().find(|s| s.id == id)
    }

    /// Checks every structural invariant, reporting the first violation found.
    pub fn validate(&self) -> Result<(), CaseError> {
        use ValidationCode::*;

        if !(self.base_mva.is_finite() && self.base_mva > 0.0) {
            return Err(invalid(
                InvalidBaseMva,
                format!("base_mva must be positive, got {}", self.base_mva),
            ));
        }

        check_unique("bus", self.buses.iter().map(|b| b.id.as_str()))?;
        check_unique("branch", self.branches.iter().map(|b| b.id.as_str()))?;
        check_unique("switch", self.switches.iter().map(|s| s.id.as_str()))?;
        check_unique("load", self.loads.iter().map(|d| d.id.as_str()))?;
        check_unique("generator", self.generators.iter().map(|d| d.id.as_str()))?;

        for bus in &self.buses {
            if !(bus.vmin.is_finite() && bus.vmax.is_finite()) {
                return Err(invalid(
                    NonFiniteValue,
                    format!("bus {} has non-finite voltage bounds", bus.id),
                ));
            }
            if !(0.0 < bus.vmin && bus.vmin < bus.vmax) {
                return Err(invalid(
                    InvalidVoltageBounds,
                    format!(
                        "bus {} needs 0 < vmin < vmax, got [{}, {}]",
                        bus.id, bus.vmin, bus.vmax
                    ),
                ));
            }
        }

        let index = self.bus_index();
        let lookup = |owner: &str, id: &str, bus: &str| -> Result<usize, CaseError> {
            index.get(bus).copied().ok_or_else(|| {
                invalid(
                    DanglingBusRef,
                    format!("{owner} {id} references unknown bus {bus}"),
                )
            })
        };

        let mut edges = Vec::with_capacity(self.branches.len() + self.switches.len());
        for br in &self.branches {
            let f = lookup("branch", &br.id, &br.from)?;
            let t = lookup("branch", &br.id, &br.to)?;
            if f == t {
                return Err(invalid(
                    SelfLoop,
                    format!("branch {} connects bus {} to itself", br.id, br.from),
                ));
            }
            if !(br.r.is_finite() && br.x.is_finite() && br.b.is_finite()) {
                return Err(invalid(
                    NonFiniteValue,
                    format!("branch {} has non-finite impedance", br.id),
                ));
            }
            if br.r == 0.0 && br.x == 0.0 {
                return Err(invalid(
                    ZeroImpedance,
                    format!("branch {} has zero impedance", br.id),
                ));
            }
            if br.r < 0.0 {
                return Err(invalid(
                    ZeroImpedance,
                    format!("branch {} has negative resistance", br.id),
                ));
            }
            edges.push((f, t, false));
        }
        for sw in &self.switches {
            let f = lookup("switch", &sw.id, &sw.from)?;
            let t = lookup("switch", &sw.id, &sw.to)?;
            if f == t {
                return Err(invalid(
                    SelfLoop,
                    format!("switch {} connects bus {} to itself", sw.id, sw.from),
                ));
            }
            edges.push((f, t, true));
        }
        for (kind, devices) in [("load", &self.loads), ("generator", &self.generators)] {
            for dev in devices {
                lookup(kind, &dev.id, &dev.bus)?;
                if !(dev.power_factor > 0.0 && dev.power_factor <= 1.0) {
                    return Err(invalid(
                        InvalidPowerFactor,
                        format!(
                            "{kind} {} power factor {} outside (0, 1]",
                            dev.id, dev.power_factor
                        ),
                    ));
                }
            }
        }

        let heads: Vec<usize> = self.feeder_heads().collect();
        if heads.is_empty() {
            return Err(invalid(NoFeederHead, "case has no feeder-head bus"));
        }

        let n = self.buses.len();
        let mut all = DisjointSet::new(n);
        let mut fixed = DisjointSet::new(n);
        for &(f, t, is_switch) in &edges {
            all.union(f, t);
            if !is_switch {
                fixed.union(f, t);
            }
        }
        let (_, components) = all.labels();
        if components != 1 {
            return Err(invalid(
                DisconnectedCase,
                format!("case splits into {components} components with every switch closed"),
            ));
        }
        let mut seen: HashMap<usize, usize> = HashMap::new();
        for &h in &heads {
            if let Some(&other) = seen.get(&fixed.find(h)) {
                return Err(invalid(
                    CoupledFeederHeads,
                    format!(
                        "feeder heads {} and {} are joined without a switch",
                        self.buses[other].id, self.buses[h].id
                    ),
                ));
            }
            seen.insert(fixed.find(h), h);
        }
        Ok(())
    }
}

fn check_unique<'a>(kind: &str, ids: impl Iterator<Item = &'a str>) -> Result<(), CaseError> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(invalid(
                ValidationCode::DuplicateId,
                format!("duplicate {kind} id {id}"),
            ));
        }
    }
    Ok(())
}

/// Open/closed state of every non-degenerate switch, one bit per switch in
/// canonical order. Bit `i` set means switch `i` is closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    mask: u64,
    len: u8,
}

/// Largest switch count a [`Configuration`] can represent.
pub const MAX_CONFIGURATION_BITS: usize = 63;

impl Configuration {
    pub fn new(mask: u64, len: usize) -> Self {
        assert!(len <= MAX_CONFIGURATION_BITS, "configuration too long");
        assert!(
            mask >> len == 0,
            "mask has bits beyond configuration length"
        );
        Self {
            mask,
            len: len as u8,
        }
    }

    pub fn all_closed(len: usize) -> Self {
        Self::new((1u64 << len) - 1, len)
    }

    pub fn all_open(len: usize) -> Self {
        Self::new(0, len)
    }

    pub fn from_states(states: &[bool]) -> Self {
        let mask = states
            .iter()
            .enumerate()
            .fold(0u64, |m, (i, &c)| if c { m | (1 << i) } else { m });
        Self::new(mask, states.len())
    }

    /// Parses a string of `0`/`1` characters; character `i` is switch `i`.
    pub fn parse_bits(text: &str) -> Option<Self> {
        if text.len() > MAX_CONFIGURATION_BITS {
            return None;
        }
        let mut states = Vec::with_capacity(text.len());
        for c in text.chars() {
            match c {
                '0' => states.push(false),
                '1' => states.push(true),
                _ => return None,
            }
        }
        Some(Self::from_states(&states))
    }

    pub fn to_bits(&self) -> String {
        (0..self.len())
            .map(|i| if self.is_closed(i) { '1' } else { '0' })
            .collect()
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_closed(&self, i: usize) -> bool {
        self.mask >> i & 1 == 1
    }

    pub fn closed_count(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn states(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.is_closed(i)).collect()
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bits())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineKind {
    Branch(usize),
    Switch(usize),
}

/// A series element of the operational network, bus positions by index.
#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub b: f64,
    pub kind: LineKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Island {
    /// Bus positions, ascending.
    pub buses: Vec<usize>,
    pub feeder_heads: Vec<usize>,
    pub has_load: bool,
}

impl Island {
    /// The island's reference bus, when it has exactly one feeder head.
    pub fn slack(&self) -> Option<usize> {
        match self.feeder_heads.as_slice() {
            [h] => Some(*h),
            _ => None,
        }
    }
}

/// A case with a configuration applied: closed switches realised as
/// low-impedance lines and buses partitioned into islands.
#[derive(Debug, Clone, PartialEq)]
pub struct OperationalNetwork {
    pub bus_count: usize,
    pub lines: Vec<Line>,
    pub islands: Vec<Island>,
    pub bus_island: Vec<usize>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ApplyError {
    #[error("configuration has {got} bits but the switch order has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("unknown switch id {0} in switch order")]
    UnknownSwitch(String),
}

/// Realises `cfg` on `case`. `switch_order[i]` names the switch driven by bit
/// `i`; switches absent from the order stay open.
pub fn apply_configuration(
    case: &NetworkCase,
    switch_order: &[String],
    cfg: &Configuration,
) -> Result<OperationalNetwork, ApplyError> {
    if switch_order.len() != cfg.len() {
        return Err(ApplyError::LengthMismatch {
            expected: switch_order.len(),
            got: cfg.len(),
        });
    }
    let index = case.bus_index();
    let switch_pos: HashMap<&str, usize> = case
        .switches
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();

    let mut lines: Vec<Line> = case
        .branches
        .iter()
        .enumerate()
        .map(|(i, br)| Line {
            from: index[br.from.as_str()],
            to: index[br.to.as_str()],
            r: br.r,
            x: br.x,
            b: br.b,
            kind: LineKind::Branch(i),
        })
        .collect();

    let mut closed: Vec<usize> = Vec::new();
    for (bit, id) in switch_order.iter().enumerate() {
        let pos = *switch_pos
            .get(id.as_str())
            .ok_or_else(|| ApplyError::UnknownSwitch(id.clone()))?;
        if cfg.is_closed(bit) {
            closed.push(pos);
        }
    }
    closed.sort_unstable();
    for pos in closed {
        let sw = &case.switches[pos];
        lines.push(Line {
            from: index[sw.from.as_str()],
            to: index[sw.to.as_str()],
            r: 0.0,
            x: CLOSED_SWITCH_X,
            b: 0.0,
            kind: LineKind::Switch(pos),
        });
    }

    let n = case.buses.len();
    let mut dsu = DisjointSet::new(n);
    for line in &lines {
        dsu.union(line.from, line.to);
    }
    let (bus_island, count) = dsu.labels();

    let mut loaded = vec![false; n];
    for dev in &case.loads {
        loaded[index[dev.bus.as_str()]] = true;
    }
    let mut islands = vec![
        Island {
            buses: Vec::new(),
            feeder_heads: Vec::new(),
            has_load: false,
        };
        count
    ];
    for (bus, &isl) in bus_island.iter().enumerate() {
        let island = &mut islands[isl];
        island.buses.push(bus);
        if case.buses[bus].is_feeder_head {
            island.feeder_heads.push(bus);
        }
        island.has_load |= loaded[bus];
    }

    Ok(OperationalNetwork {
        bus_count: n,
        lines,
        islands,
        bus_island,
    })
}
