//! Fixture access and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;

use num_complex::Complex64;

use dnr_core::network::{Line, OperationalNetwork};
use dnr_core::powerflow::{InjectionVector, PowerFlowSolution};
use dnr_core::{load_case, load_profiles, NetworkCase, ProfileSet};

pub const SHIPPED: [&str; 5] = [
    "simple_case.json",
    "spanish_like.json",
    "triangle.json",
    "heavy_feeder.json",
    "lattice.json",
];

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn case(name: &str) -> NetworkCase {
    load_case(fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn profiles(name: &str) -> ProfileSet {
    load_profiles(fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Plain union-find, kept separate from the library's own.
pub struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }

    pub fn components(&mut self) -> usize {
        let n = self.parent.len();
        (0..n).map(|i| self.find(i)).collect::<BTreeSet<_>>().len()
    }
}

/// Bus-level view of a case: a virtual root tied to every feeder head and
/// union-find seeded with every branch.
pub struct BusGraph {
    pub index: HashMap<String, usize>,
    pub root: usize,
    pub base: UnionFind,
}

impl BusGraph {
    pub fn new(case: &NetworkCase) -> Self {
        let index: HashMap<String, usize> = case
            .buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id.clone(), i))
            .collect();
        let root = case.buses.len();
        let mut base = UnionFind::new(root + 1);
        for (i, b) in case.buses.iter().enumerate() {
            if b.is_feeder_head {
                base.union(i, root);
            }
        }
        for br in &case.branches {
            base.union(index[&br.from], index[&br.to]);
        }
        Self { index, root, base }
    }

    fn fresh(&self) -> UnionFind {
        UnionFind {
            parent: self.base.parent.clone(),
        }
    }

    /// Switches whose ends already sit in one region; they can never close
    /// without a loop.
    pub fn degenerate_switches(&self, case: &NetworkCase) -> BTreeSet<String> {
        let mut uf = self.fresh();
        case.switches
            .iter()
            .filter(|s| uf.find(self.index[&s.from]) == uf.find(self.index[&s.to]))
            .map(|s| s.id.clone())
            .collect()
    }

    /// Radial iff every closed switch merges two regions and one region
    /// remains at the end.
    pub fn is_radial(&self, case: &NetworkCase, closed: &[&str]) -> bool {
        let mut uf = self.fresh();
        for id in closed {
            let s = case.switch_by_id(id).unwrap();
            if !uf.union(self.index[&s.from], self.index[&s.to]) {
                return false;
            }
        }
        uf.components() == 1
    }
}

/// Every radial closed-switch set of a case by brute force over the bus
/// graph, as bit strings over the sorted non-degenerate switch ids.
pub fn brute_force_radial(case: &NetworkCase) -> (Vec<String>, BTreeSet<String>) {
    let graph = BusGraph::new(case);
    let degenerate = graph.degenerate_switches(case);
    let mut order: Vec<String> = case
        .switches
        .iter()
        .map(|s| s.id.clone())
        .filter(|id| !degenerate.contains(id))
        .collect();
    order.sort();
    let n = order.len();
    let mut out = BTreeSet::new();
    for mask in 0u64..1 << n {
        let closed: Vec<&str> = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| order[i].as_str())
            .collect();
        if graph.is_radial(case, &closed) {
            out.insert(
                (0..n)
                    .map(|i| if mask >> i & 1 == 1 { '1' } else { '0' })
                    .collect(),
            );
        }
    }
    (order, out)
}

/// Spanning-tree count of a multigraph by the Matrix-Tree theorem.
pub fn spanning_tree_count(nodes: usize, edges: &[(usize, usize)]) -> f64 {
    if nodes <= 1 {
        return 1.0;
    }
    let mut lap = nalgebra::DMatrix::<f64>::zeros(nodes, nodes);
    for &(a, b) in edges {
        if a == b {
            continue;
        }
        lap[(a, a)] += 1.0;
        lap[(b, b)] += 1.0;
        lap[(a, b)] -= 1.0;
        lap[(b, a)] -= 1.0;
    }
    lap.view((1, 1), (nodes - 1, nodes - 1))
        .into_owned()
        .determinant()
}

/// Current leaving `bus` into the network, summed line by line.
fn injected_current(net: &OperationalNetwork, v: &[Complex64], bus: usize) -> Complex64 {
    let mut i = Complex64::new(0.0, 0.0);
    for Line {
        from, to, r, x, b, ..
    } in &net.lines
    {
        let y = Complex64::new(1.0, 0.0) / Complex64::new(*r, *x);
        let ysh = Complex64::new(0.0, b / 2.0);
        if *from == bus {
            i += y * (v[*from] - v[*to]) + ysh * v[*from];
        } else if *to == bus {
            i += y * (v[*to] - v[*from]) + ysh * v[*to];
        }
    }
    i
}

/// Largest |S_spec − V·conj(I)| over all buses, with the slack source added
/// to each slack bus' specified injection.
pub fn max_power_mismatch(
    net: &OperationalNetwork,
    sol: &PowerFlowSolution,
    inj: &InjectionVector,
) -> f64 {
    let v = sol.voltages();
    let mut spec = inj.power.clone();
    for s in &sol.slack {
        spec[s.bus] += s.power;
    }
    (0..net.bus_count)
        .map(|k| (spec[k] - v[k] * injected_current(net, &v, k).conj()).norm())
        .fold(0.0, f64::max)
}

/// Σ r·|I|² over all lines, p.u.
pub fn ohmic_losses(net: &OperationalNetwork, sol: &PowerFlowSolution) -> f64 {
    let v = sol.voltages();
    net.lines
        .iter()
        .map(|l| {
            let i = (v[l.from] - v[l.to]) / Complex64::new(l.r, l.x);
            l.r * i.norm_sqr()
        })
        .sum()
}
