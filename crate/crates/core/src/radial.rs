//! Exhaustive enumeration of radial switch configurations.
//!
//! Each of the `2^n` candidates goes through three checks in order, stopping
//! at the first failure:
//!
//! 1. exactly `nodes - 1` switches are closed,
//! 2. a search from the super node finds no node reachable by two paths,
//! 3. the nodes reached by that search cover the whole graph.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::Configuration;
use crate::reduction::{ReducedGraph, SUPER_NODE};

/// Upper bound on configurable switches for exhaustive enumeration.
pub const MAX_SWITCHES: usize = 30;

const BLOCK: u64 = 1 << 14;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RadialError {
    #[error("too_many_switches: {count} configurable switches exceed the limit of {limit}")]
    TooManySwitches { count: usize, limit: usize },
    #[error("reduced graph has {0} nodes; at most 64 are supported")]
    TooManyNodes(usize),
}

/// Set of graph nodes as a bit mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct NodeSet(pub u64);

impl NodeSet {
    pub fn full(n: usize) -> Self {
        NodeSet(if n == 64 { u64::MAX } else { (1u64 << n) - 1 })
    }

    pub fn contains(&self, node: usize) -> bool {
        self.0 >> node & 1 == 1
    }

    pub fn insert(&mut self, node: usize) {
        self.0 |= 1 << node;
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RadialStats {
    /// `2^n` for `n` configurable switches.
    pub candidates: u64,
    /// Skipped up front because they close every switch of a cycle group.
    pub pruned: u64,
    pub rejected_count: u64,
    pub rejected_loop: u64,
    pub rejected_connectivity: u64,
    pub radial: u64,
}

impl RadialStats {
    pub fn examined(&self) -> u64 {
        self.candidates - self.pruned
    }

    pub fn rejected(&self) -> u64 {
        self.rejected_count + self.rejected_loop + self.rejected_connectivity
    }

    /// Share of all candidates that are not radial, in percent.
    pub fn discarded_pct(&self) -> f64 {
        if self.candidates == 0 {
            return 0.0;
        }
        100.0 * (self.candidates - self.radial) as f64 / self.candidates as f64
    }

    fn merge(mut self, other: RadialStats) -> RadialStats {
        self.candidates += other.candidates;
        self.pruned += other.pruned;
        self.rejected_count += other.rejected_count;
        self.rejected_loop += other.rejected_loop;
        self.rejected_connectivity += other.rejected_connectivity;
        self.radial += other.radial;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialSet {
    pub switch_order: Vec<String>,
    /// Ascending by bit-vector value.
    pub configs: Vec<Configuration>,
    pub stats: RadialStats,
}

impl RadialSet {
    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn position(&self, cfg: &Configuration) -> Option<usize> {
        self.configs.binary_search(cfg).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationOptions {
    /// Skip candidates closing a whole cycle group before the full checks.
    pub prune: bool,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        Self { prune: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Radial,
    Pruned,
    FailedCount,
    FailedLoop,
    FailedConnectivity,
}

/// Adjacency prepared once per graph for repeated radiality checks.
#[derive(Debug, Clone)]
pub struct RadialityChecker {
    node_count: usize,
    adjacency: Vec<Vec<(usize, usize)>>,
    group_masks: Vec<u64>,
}

impl RadialityChecker {
    pub fn new(graph: &ReducedGraph) -> Result<Self, RadialError> {
        let node_count = graph.node_count();
        if node_count > 64 {
            return Err(RadialError::TooManyNodes(node_count));
        }
        let mut adjacency = vec![Vec::new(); node_count];
        for (k, e) in graph.edges.iter().enumerate() {
            adjacency[e.a].push((e.b, k));
            adjacency[e.b].push((e.a, k));
        }
        Ok(Self {
            node_count,
            adjacency,
            group_masks: graph.cycle_group_masks(),
        })
    }

    pub fn count_check(&self, mask: u64) -> bool {
        mask.count_ones() as usize + 1 == self.node_count
    }

    /// Walks closed edges from the super node. Fails as soon as some node is
    /// reached a second time; otherwise returns the nodes reached.
    pub fn loop_check(&self, mask: u64) -> (bool, NodeSet) {
        let mut visited = NodeSet::default();
        if self.node_count == 0 {
            return (true, visited);
        }
        let mut used = 0u64;
        let mut stack = [0usize; 64];
        let mut top = 1;
        stack[0] = SUPER_NODE;
        visited.insert(SUPER_NODE);
        while top > 0 {
            top -= 1;
            let u = stack[top];
            for &(v, k) in &self.adjacency[u] {
                if mask >> k & 1 == 0 || used >> k & 1 == 1 {
                    continue;
                }
                used |= 1 << k;
                if visited.contains(v) {
                    return (false, visited);
                }
                visited.insert(v);
                stack[top] = v;
                top += 1;
            }
        }
        (true, visited)
    }

    pub fn connectivity_check(&self, visited: NodeSet) -> bool {
        visited == NodeSet::full(self.node_count)
    }

    pub fn violates_group(&self, mask: u64) -> bool {
        !self.group_masks.iter().all(|&g| mask & g != g)
    }

    pub fn classify(&self, mask: u64, prune: bool) -> Verdict {
        if prune && self.violates_group(mask) {
            return Verdict::Pruned;
        }
        if !self.count_check(mask) {
            return Verdict::FailedCount;
        }
        let (ok, visited) = self.loop_check(mask);
        if !ok {
            return Verdict::FailedLoop;
        }
        if !self.connectivity_check(visited) {
            return Verdict::FailedConnectivity;
        }
        Verdict::Radial
    }
}

/// True iff the closed-switch count equals the node count minus one.
pub fn count_check(cfg: &Configuration, graph: &ReducedGraph) -> bool {
    cfg.closed_count() + 1 == graph.node_count()
}

pub fn loop_check(
    cfg: &Configuration,
    graph: &ReducedGraph,
) -> Result<(bool, NodeSet), RadialError> {
    Ok(RadialityChecker::new(graph)?.loop_check(cfg.mask()))
}

pub fn connectivity_check(visited: NodeSet, graph: &ReducedGraph) -> bool {
    visited == NodeSet::full(graph.node_count())
}

pub fn enumerate_radial(graph: &ReducedGraph) -> Result<RadialSet, RadialError> {
    enumerate_radial_with(graph, EnumerationOptions::default())
}

pub fn enumerate_radial_with(
    graph: &ReducedGraph,
    options: EnumerationOptions,
) -> Result<RadialSet, RadialError> {
    let n = graph.edge_count();
    if n > MAX_SWITCHES {
        return Err(RadialError::TooManySwitches {
            count: n,
            limit: MAX_SWITCHES,
        });
    }
    let checker = RadialityChecker::new(graph)?;
    let total = 1u64 << n;
    let blocks = total.div_ceil(BLOCK);

    let parts: Vec<(Vec<u64>, RadialStats)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK;
            let end = (start + BLOCK).min(total);
            let mut found = Vec::new();
            let mut stats = RadialStats {
                candidates: end - start,
                ..RadialStats::default()
            };
            for mask in start..end {
                match checker.classify(mask, options.prune) {
                    Verdict::Radial => {
                        stats.radial += 1;
                        found.push(mask);
                    }
                    Verdict::Pruned => stats.pruned += 1,
                    Verdict::FailedCount => stats.rejected_count += 1,
                    Verdict::FailedLoop => stats.rejected_loop += 1,
                    Verdict::FailedConnectivity => stats.rejected_connectivity += 1,
                }
            }
            (found, stats)
        })
        .collect();

    let mut configs = Vec::new();
    let mut stats = RadialStats::default();
    for (found, part) in parts {
        configs.extend(found.into_iter().map(|m| Configuration::new(m, n)));
        stats = stats.merge(part);
    }
    Ok(RadialSet {
        switch_order: graph.switch_order(),
        configs,
        stats,
    })
}
