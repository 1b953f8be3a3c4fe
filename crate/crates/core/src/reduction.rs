//! Contraction of a network case into its switch graph.
//!
//! Feeder heads collapse into a single super node, every switch-free region
//! collapses into one graph node, and each switch becomes an edge. Switches
//! that would close a loop inside a single node are pinned open and carry no
//! configuration bit.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::dsu::DisjointSet;
use crate::network::NetworkCase;

pub const SUPER_NODE: usize = 0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchEdge {
    pub switch: String,
    pub a: usize,
    pub b: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReducedGraph {
    /// Bus ids per graph node; node 0 is the super node.
    pub nodes: Vec<Vec<String>>,
    /// One edge per configurable switch, sorted by switch id.
    pub edges: Vec<SwitchEdge>,
    pub fixed_open: Vec<String>,
    /// Switch sets that close a cycle when all of them are closed.
    pub cycle_groups: Vec<Vec<String>>,
}

impl ReducedGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Canonical switch order: bit `i` of a configuration drives `edges[i]`.
    pub fn switch_order(&self) -> Vec<String> {
        self.edges.iter().map(|e| e.switch.clone()).collect()
    }

    pub fn edge_index(&self, switch: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.switch == switch)
    }

    /// Cycle groups as bit masks over the canonical switch order.
    pub fn cycle_group_masks(&self) -> Vec<u64> {
        self.cycle_groups
            .iter()
            .map(|group| {
                group.iter().fold(0u64, |m, id| {
                    m | 1 << self.edge_index(id).expect("cycle group references an edge")
                })
            })
            .collect()
    }

    pub fn node_of_bus(&self, bus: &str) -> Option<usize> {
        self.nodes
            .iter()
            .position(|members| members.iter().any(|b| b == bus))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reduced graph serializes")
    }
}

/// Builds the reduced switch graph for a validated case.
pub fn reduce(case: &NetworkCase) -> ReducedGraph {
    let contracted = contract(case);
    let (fixed_open, cycle_groups) = classify_degenerate(&contracted);
    let edges = contracted
        .edges
        .into_iter()
        .filter(|e| e.a != e.b)
        .collect();
    ReducedGraph {
        nodes: contracted.nodes,
        edges,
        fixed_open,
        cycle_groups,
    }
}

/// Contraction without degeneracy handling: self-loop edges are kept.
fn contract(case: &NetworkCase) -> ReducedGraph {
    let index = case.bus_index();
    let n = case.buses.len();
    let mut dsu = DisjointSet::new(n);
    for br in &case.branches {
        dsu.union(index[br.from.as_str()], index[br.to.as_str()]);
    }
    let heads: Vec<usize> = case.feeder_heads().collect();
    for pair in heads.windows(2) {
        dsu.union(pair[0], pair[1]);
    }

    // Super node first, the rest by their first bus in case order.
    let super_root = heads.first().map(|&h| dsu.find(h));
    let mut root_node = vec![usize::MAX; n];
    let mut nodes: Vec<Vec<String>> = Vec::new();
    if let Some(root) = super_root {
        root_node[root] = 0;
        nodes.push(Vec::new());
    }
    let mut bus_node = vec![0; n];
    for (bus, slot) in bus_node.iter_mut().enumerate() {
        let root = dsu.find(bus);
        if root_node[root] == usize::MAX {
            root_node[root] = nodes.len();
            nodes.push(Vec::new());
        }
        *slot = root_node[root];
        nodes[*slot].push(case.buses[bus].id.clone());
    }

    let mut switches: Vec<_> = case.switches.iter().collect();
    switches.sort_by(|a, b| a.id.cmp(&b.id));
    let edges = switches
        .into_iter()
        .map(|sw| SwitchEdge {
            switch: sw.id.clone(),
            a: bus_node[index[sw.from.as_str()]],
            b: bus_node[index[sw.to.as_str()]],
        })
        .collect();

    ReducedGraph {
        nodes,
        edges,
        fixed_open: Vec::new(),
        cycle_groups: Vec::new(),
    }
}

/// Splits the graph's switches into those that must stay open (edges from a
/// node to itself) and groups of switches lying on a common cycle.
///
/// Groups are the fundamental cycles of a BFS spanning tree rooted at the
/// super node, plus every pair of parallel edges.
pub fn classify_degenerate(graph: &ReducedGraph) -> (Vec<String>, Vec<Vec<String>>) {
    let mut fixed_open: Vec<String> = graph.fixed_open.clone();
    let mut live: Vec<&SwitchEdge> = Vec::new();
    for e in &graph.edges {
        if e.a == e.b {
            fixed_open.push(e.switch.clone());
        } else {
            live.push(e);
        }
    }
    fixed_open.sort();
    fixed_open.dedup();

    let n = graph.node_count();
    let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (k, e) in live.iter().enumerate() {
        adjacency[e.a].push((e.b, k));
        adjacency[e.b].push((e.a, k));
    }

    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut depth = vec![usize::MAX; n];
    let mut tree_edge = vec![false; live.len()];
    for root in 0..n {
        if depth[root] != usize::MAX {
            continue;
        }
        depth[root] = 0;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &(v, k) in &adjacency[u] {
                if depth[v] == usize::MAX {
                    depth[v] = depth[u] + 1;
                    parent[v] = Some((u, k));
                    tree_edge[k] = true;
                    queue.push_back(v);
                }
            }
        }
    }

    let mut groups: BTreeSet<Vec<usize>> = BTreeSet::new();
    for (k, e) in live.iter().enumerate() {
        if tree_edge[k] {
            continue;
        }
        let mut members = vec![k];
        let (mut u, mut v) = (e.a, e.b);
        while u != v {
            if depth[u] < depth[v] {
                std::mem::swap(&mut u, &mut v);
            }
            let (p, pk) = parent[u].expect("non-root node has a parent");
            members.push(pk);
            u = p;
        }
        members.sort_unstable();
        groups.insert(members);
    }
    for i in 0..live.len() {
        for j in i + 1..live.len() {
            let (x, y) = (live[i], live[j]);
            if (x.a == y.a && x.b == y.b) || (x.a == y.b && x.b == y.a) {
                groups.insert(vec![i, j]);
            }
        }
    }

    let mut cycle_groups: Vec<Vec<usize>> = groups.into_iter().collect();
    cycle_groups.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    let cycle_groups = cycle_groups
        .into_iter()
        .map(|g| g.into_iter().map(|k| live[k].switch.clone()).collect())
        .collect();
    (fixed_open, cycle_groups)
}
