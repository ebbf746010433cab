//! The hierarchical network: levels, plain and portal edges, OD pairs.
//!
//! [`NetworkHierarchy`] is the plain description (what a file deserializes
//! into). [`validate_hierarchy`] reports every broken invariant as data, and
//! [`Network::new`] compiles a valid description into index-based form used
//! by the loading and solver code.
//!
//! Levels are indexed from 0 in the API. Level 0 is the top level whose OD
//! pairs carry exogenous demand; a portal edge at level `k` is bound to one OD
//! pair of level `k + 1`, and that OD pair's demand is the portal's flow.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::costs::LinkCost;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkHierarchy {
    /// Rationality temperature per level, same length as `levels`.
    pub gammas: Vec<f64>,
    pub levels: Vec<LevelGraph>,
    /// Maximum number of relaxation rounds on cyclic levels. Required iff
    /// some level is cyclic.
    pub walk_cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LevelGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<Edge>,
    pub od_pairs: Vec<OdPair>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: String,
    pub from: String,
    pub to: String,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeKind {
    Plain { cost: LinkCost },
    Portal { target_od: OdRef },
}

/// Reference to an OD pair by (level index, OD index), both 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OdRef {
    pub level: usize,
    pub od: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdPair {
    pub origin: String,
    pub destination: String,
    /// Present only at level 0.
    pub demand: Option<f64>,
}

impl Edge {
    pub fn plain(id: &str, from: &str, to: &str, cost: LinkCost) -> Self {
        Edge {
            id: id.to_string(),
            from: from.to_string(),
            to: to.to_string(),
            kind: EdgeKind::Plain { cost },
        }
    }

    pub fn portal(id: &str, from: &str, to: &str, level: usize, od: usize) -> Self {
        Edge {
            id: id.to_string(),
            from: from.to_string(),
            to: to.to_string(),
            kind: EdgeKind::Portal {
                target_od: OdRef { level, od },
            },
        }
    }
}

impl OdPair {
    pub fn new(origin: &str, destination: &str, demand: Option<f64>) -> Self {
        OdPair {
            origin: origin.to_string(),
            destination: destination.to_string(),
            demand,
        }
    }
}

/// One broken invariant, located by level and entity index.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoLevels,
    GammaCountMismatch {
        gammas: usize,
        levels: usize,
    },
    NonPositiveGamma {
        level: usize,
        gamma: f64,
    },
    ZeroWalkCap,
    DuplicateNode {
        level: usize,
        node: String,
    },
    DuplicateEdgeId {
        level: usize,
        edge: usize,
        id: String,
    },
    UnknownNode {
        level: usize,
        edge: usize,
        node: String,
    },
    SelfLoop {
        level: usize,
        edge: usize,
    },
    InvalidCost {
        level: usize,
        edge: usize,
        reason: String,
    },
    PortalAtLastLevel {
        level: usize,
        edge: usize,
    },
    PortalTargetLevel {
        level: usize,
        edge: usize,
        target_level: usize,
    },
    PortalTargetMissing {
        level: usize,
        edge: usize,
        target: OdRef,
    },
    DuplicatePortalBinding {
        level: usize,
        od: usize,
        portals: Vec<usize>,
    },
    UnboundOd {
        level: usize,
        od: usize,
    },
    UnknownOdNode {
        level: usize,
        od: usize,
        node: String,
    },
    DegenerateOd {
        level: usize,
        od: usize,
    },
    MissingDemand {
        level: usize,
        od: usize,
    },
    NonPositiveDemand {
        level: usize,
        od: usize,
        demand: f64,
    },
    DemandAtInnerLevel {
        level: usize,
        od: usize,
    },
    NoPath {
        level: usize,
        od: usize,
    },
    CyclicLevelWithoutCap {
        level: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            NoLevels => write!(f, "levels: hierarchy has no levels"),
            GammaCountMismatch { gammas, levels } => {
                write!(f, "gammas: {gammas} temperatures for {levels} levels")
            }
            NonPositiveGamma { level, gamma } => {
                write!(f, "gammas[{level}]: temperature must be > 0, got {gamma}")
            }
            ZeroWalkCap => write!(f, "walk_cap: must be >= 1"),
            DuplicateNode { level, node } => {
                write!(f, "levels[{level}].nodes: duplicate node id {node:?}")
            }
            DuplicateEdgeId { level, edge, id } => {
                write!(f, "levels[{level}].edges[{edge}]: duplicate edge id {id:?}")
            }
            UnknownNode { level, edge, node } => {
                write!(f, "levels[{level}].edges[{edge}]: unknown node {node:?}")
            }
            SelfLoop { level, edge } => write!(f, "levels[{level}].edges[{edge}]: self-loop"),
            InvalidCost { level, edge, reason } => {
                write!(f, "levels[{level}].edges[{edge}].cost: {reason}")
            }
            PortalAtLastLevel { level, edge } => {
                write!(f, "levels[{level}].edges[{edge}]: portal edge on the last level")
            }
            PortalTargetLevel { level, edge, target_level } => write!(
                f,
                "levels[{level}].edges[{edge}].target_od: must reference level {}, got {target_level}",
                level + 1
            ),
            PortalTargetMissing { level, edge, target } => write!(
                f,
                "levels[{level}].edges[{edge}].target_od: level {} has no od pair {}",
                target.level, target.od
            ),
            DuplicatePortalBinding { level, od, portals } => write!(
                f,
                "levels[{level}].od_pairs[{od}]: bound by several portal edges {portals:?} of level {}",
                level - 1
            ),
            UnboundOd { level, od } => write!(
                f,
                "levels[{level}].od_pairs[{od}]: not bound by any portal edge of level {}",
                level - 1
            ),
            UnknownOdNode { level, od, node } => {
                write!(f, "levels[{level}].od_pairs[{od}]: unknown node {node:?}")
            }
            DegenerateOd { level, od } => {
                write!(f, "levels[{level}].od_pairs[{od}]: origin equals destination")
            }
            MissingDemand { level, od } => {
                write!(f, "levels[{level}].od_pairs[{od}]: top-level demand is missing")
            }
            NonPositiveDemand { level, od, demand } => {
                write!(f, "levels[{level}].od_pairs[{od}]: demand must be > 0, got {demand}")
            }
            DemandAtInnerLevel { level, od } => write!(
                f,
                "levels[{level}].od_pairs[{od}]: demand is induced by portal flow and may not be given"
            ),
            NoPath { level, od } => {
                write!(f, "levels[{level}].od_pairs[{od}]: destination unreachable from origin")
            }
            CyclicLevelWithoutCap { level } => {
                write!(f, "levels[{level}]: graph is cyclic and no walk_cap is configured")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid hierarchy:\n{}", .0.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Violation>),
    #[error("level {level}: no flow given for portal edge {edge:?}")]
    MissingPortalFlow { level: usize, edge: String },
    #[error("level {0} has no next level")]
    NoNextLevel(usize),
    #[error("level {0}: cyclic graph without a walk cap")]
    Unbounded(usize),
}

/// Returns every broken invariant of `net`, in a fixed order.
pub fn validate_hierarchy(net: &NetworkHierarchy) -> Vec<Violation> {
    let mut out = Vec::new();
    let m = net.levels.len();
    if m == 0 {
        out.push(Violation::NoLevels);
        return out;
    }
    if net.gammas.len() != m {
        out.push(Violation::GammaCountMismatch {
            gammas: net.gammas.len(),
            levels: m,
        });
    }
    for (level, &gamma) in net.gammas.iter().enumerate() {
        if !(gamma.is_finite() && gamma > 0.0) {
            out.push(Violation::NonPositiveGamma { level, gamma });
        }
    }
    if net.walk_cap == Some(0) {
        out.push(Violation::ZeroWalkCap);
    }

    // bindings[level][od] -> portal edges at level - 1 referencing it
    let mut bindings: Vec<Vec<Vec<usize>>> = net
        .levels
        .iter()
        .map(|g| vec![Vec::new(); g.od_pairs.len()])
        .collect();

    for (level, g) in net.levels.iter().enumerate() {
        let mut nodes = BTreeSet::new();
        for node in &g.nodes {
            if !nodes.insert(node.as_str()) {
                out.push(Violation::DuplicateNode {
                    level,
                    node: node.clone(),
                });
            }
        }
        let mut ids = BTreeSet::new();
        for (ei, e) in g.edges.iter().enumerate() {
            if !ids.insert(e.id.as_str()) {
                out.push(Violation::DuplicateEdgeId {
                    level,
                    edge: ei,
                    id: e.id.clone(),
                });
            }
            for end in [&e.from, &e.to] {
                if !nodes.contains(end.as_str()) {
                    out.push(Violation::UnknownNode {
                        level,
                        edge: ei,
                        node: end.clone(),
                    });
                }
            }
            if e.from == e.to {
                out.push(Violation::SelfLoop { level, edge: ei });
            }
            match e.kind {
                EdgeKind::Plain { cost } => {
                    if let Err(err) = cost.check() {
                        out.push(Violation::InvalidCost {
                            level,
                            edge: ei,
                            reason: err.to_string(),
                        });
                    }
                }
                EdgeKind::Portal { target_od } => {
                    if level + 1 == m {
                        out.push(Violation::PortalAtLastLevel { level, edge: ei });
                    } else if target_od.level != level + 1 {
                        out.push(Violation::PortalTargetLevel {
                            level,
                            edge: ei,
                            target_level: target_od.level,
                        });
                    } else if target_od.od >= net.levels[level + 1].od_pairs.len() {
                        out.push(Violation::PortalTargetMissing {
                            level,
                            edge: ei,
                            target: target_od,
                        });
                    } else {
                        bindings[level + 1][target_od.od].push(ei);
                    }
                }
            }
        }
        for (oi, od) in g.od_pairs.iter().enumerate() {
            let mut known = true;
            for end in [&od.origin, &od.destination] {
                if !nodes.contains(end.as_str()) {
                    known = false;
                    out.push(Violation::UnknownOdNode {
                        level,
                        od: oi,
                        node: end.clone(),
                    });
                }
            }
            if od.origin == od.destination {
                out.push(Violation::DegenerateOd { level, od: oi });
            }
            match (level, od.demand) {
                (0, None) => out.push(Violation::MissingDemand { level, od: oi }),
                (0, Some(d)) if !(d.is_finite() && d > 0.0) => {
                    out.push(Violation::NonPositiveDemand {
                        level,
                        od: oi,
                        demand: d,
                    })
                }
                (l, Some(_)) if l > 0 => out.push(Violation::DemandAtInnerLevel { level, od: oi }),
                _ => {}
            }
            if known && od.origin != od.destination && !reachable(g, &od.origin, &od.destination) {
                out.push(Violation::NoPath { level, od: oi });
            }
        }
        if net.walk_cap.is_none() && has_cycle(g) {
            out.push(Violation::CyclicLevelWithoutCap { level });
        }
    }

    for (level, per_od) in bindings.iter().enumerate().skip(1) {
        for (od, portals) in per_od.iter().enumerate() {
            match portals.len() {
                0 => out.push(Violation::UnboundOd { level, od }),
                1 => {}
                _ => out.push(Violation::DuplicatePortalBinding {
                    level,
                    od,
                    portals: portals.clone(),
                }),
            }
        }
    }
    out
}

fn reachable(g: &LevelGraph, from: &str, to: &str) -> bool {
    let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in &g.edges {
        adj.entry(e.from.as_str()).or_default().push(e.to.as_str());
    }
    let mut seen = BTreeSet::from([from]);
    let mut queue = VecDeque::from([from]);
    while let Some(v) = queue.pop_front() {
        if v == to {
            return true;
        }
        for &u in adj.get(v).map(Vec::as_slice).unwrap_or(&[]) {
            if seen.insert(u) {
                queue.push_back(u);
            }
        }
    }
    false
}

fn has_cycle(g: &LevelGraph) -> bool {
    let index: BTreeMap<&str, usize> = g
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut out = vec![Vec::new(); g.nodes.len()];
    for e in &g.edges {
        if let (Some(&a), Some(&b)) = (index.get(e.from.as_str()), index.get(e.to.as_str())) {
            out[a].push(b);
        }
    }
    topological_order(&out).is_none()
}

/// Kahn's algorithm; `None` when the graph has a cycle.
pub(crate) fn topological_order(out_adj: &[Vec<usize>]) -> Option<Vec<usize>> {
    let n = out_adj.len();
    let mut indeg = vec![0usize; n];
    for targets in out_adj {
        for &u in targets {
            indeg[u] += 1;
        }
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &u in &out_adj[v] {
            indeg[u] -= 1;
            if indeg[u] == 0 {
                queue.push_back(u);
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// Compiled edge of one level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelEdge {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub kind: LevelEdgeKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LevelEdgeKind {
    /// `index` is the position of this edge in the global plain-edge list
    /// (the coordinate of the dual variable).
    Plain { cost: LinkCost, index: usize },
    /// OD index at the next level.
    Portal { target_od: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Od {
    pub origin: usize,
    pub destination: usize,
    pub demand: Option<f64>,
    /// Slot of `destination` in [`Level::destinations`].
    pub dest_slot: usize,
}

/// Compiled level graph with adjacency and (for DAGs) a topological order.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub gamma: f64,
    pub node_ids: Vec<String>,
    pub edges: Vec<LevelEdge>,
    /// Outgoing edge indices per node, in input order.
    pub out_edges: Vec<Vec<usize>>,
    pub topo: Option<Vec<usize>>,
    pub ods: Vec<Od>,
    /// Distinct OD destinations, in order of first appearance.
    pub destinations: Vec<usize>,
    /// For each OD, the portal edge of the previous level bound to it.
    pub binding: Vec<Option<usize>>,
}

impl Level {
    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_acyclic(&self) -> bool {
        self.topo.is_some()
    }

    pub fn edge_index(&self, id: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.id == id)
    }
}

/// Location of a plain edge (a dual coordinate).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlainEdgeRef {
    pub level: usize,
    pub edge: usize,
}

/// A validated hierarchy in index form. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    hierarchy: NetworkHierarchy,
    levels: Vec<Level>,
    plain: Vec<PlainEdgeRef>,
    costs: Vec<LinkCost>,
}

impl Network {
    pub fn new(hierarchy: NetworkHierarchy) -> Result<Self, ModelError> {
        let violations = validate_hierarchy(&hierarchy);
        if !violations.is_empty() {
            return Err(ModelError::Invalid(violations));
        }
        let mut plain = Vec::new();
        let mut costs = Vec::new();
        let mut levels = Vec::with_capacity(hierarchy.levels.len());
        for (k, g) in hierarchy.levels.iter().enumerate() {
            let index: BTreeMap<&str, usize> = g
                .nodes
                .iter()
                .enumerate()
                .map(|(i, n)| (n.as_str(), i))
                .collect();
            let mut out_edges = vec![Vec::new(); g.nodes.len()];
            let mut edges = Vec::with_capacity(g.edges.len());
            for (ei, e) in g.edges.iter().enumerate() {
                let (from, to) = (index[e.from.as_str()], index[e.to.as_str()]);
                out_edges[from].push(ei);
                let kind = match e.kind {
                    EdgeKind::Plain { cost } => {
                        plain.push(PlainEdgeRef { level: k, edge: ei });
                        costs.push(cost);
                        LevelEdgeKind::Plain {
                            cost,
                            index: plain.len() - 1,
                        }
                    }
                    EdgeKind::Portal { target_od } => LevelEdgeKind::Portal {
                        target_od: target_od.od,
                    },
                };
                edges.push(LevelEdge {
                    id: e.id.clone(),
                    from,
                    to,
                    kind,
                });
            }
            let adj: Vec<Vec<usize>> = out_edges
                .iter()
                .map(|es| es.iter().map(|&e| edges[e].to).collect())
                .collect();
            let topo = topological_order(&adj);
            let mut destinations = Vec::new();
            let ods = g
                .od_pairs
                .iter()
                .map(|od| {
                    let destination = index[od.destination.as_str()];
                    let dest_slot = match destinations.iter().position(|&d| d == destination) {
                        Some(s) => s,
                        None => {
                            destinations.push(destination);
                            destinations.len() - 1
                        }
                    };
                    Od {
                        origin: index[od.origin.as_str()],
                        destination,
                        demand: od.demand,
                        dest_slot,
                    }
                })
                .collect::<Vec<_>>();
            levels.push(Level {
                gamma: hierarchy.gammas[k],
                node_ids: g.nodes.clone(),
                edges,
                out_edges,
                topo,
                binding: vec![None; ods.len()],
                ods,
                destinations,
            });
        }
        for k in 0..levels.len().saturating_sub(1) {
            for ei in 0..levels[k].edges.len() {
                if let LevelEdgeKind::Portal { target_od } = levels[k].edges[ei].kind {
                    levels[k + 1].binding[target_od] = Some(ei);
                }
            }
        }
        Ok(Network {
            hierarchy,
            levels,
            plain,
            costs,
        })
    }

    pub fn hierarchy(&self) -> &NetworkHierarchy {
        &self.hierarchy
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn level(&self, k: usize) -> &Level {
        &self.levels[k]
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn walk_cap(&self) -> Option<usize> {
        self.hierarchy.walk_cap
    }

    /// All plain edges, in level-major input order.
    pub fn plain_edges(&self) -> &[PlainEdgeRef] {
        &self.plain
    }

    /// Costs aligned with [`Network::plain_edges`].
    pub fn plain_costs(&self) -> &[LinkCost] {
        &self.costs
    }

    pub fn plain_edge_id(&self, index: usize) -> &str {
        let r = self.plain[index];
        &self.levels[r.level].edges[r.edge].id
    }

    /// Global plain-edge index for `(level, edge id)`.
    pub fn plain_index(&self, level: usize, id: &str) -> Option<usize> {
        let l = self.levels.get(level)?;
        match l.edges.get(l.edge_index(id)?)?.kind {
            LevelEdgeKind::Plain { index, .. } => Some(index),
            LevelEdgeKind::Portal { .. } => None,
        }
    }

    /// Exogenous demands of the top-level OD pairs.
    pub fn top_demands(&self) -> Vec<f64> {
        self.levels[0]
            .ods
            .iter()
            .map(|od| od.demand.unwrap_or(0.0))
            .collect()
    }

    pub fn min_gamma(&self) -> f64 {
        self.levels
            .iter()
            .map(|l| l.gamma)
            .fold(f64::INFINITY, f64::min)
    }

    /// Demands of the OD pairs at `level + 1` induced by `flows` (indexed by
    /// edge) at `level`: each OD receives the flow on its binding portal.
    pub fn portal_demand_map(&self, level: usize, flows: &[f64]) -> Result<Vec<f64>, ModelError> {
        let next = self
            .levels
            .get(level + 1)
            .ok_or(ModelError::NoNextLevel(level))?;
        let here = &self.levels[level];
        next.binding
            .iter()
            .map(|b| {
                let e = b.expect("validated networks bind every inner OD");
                flows
                    .get(e)
                    .copied()
                    .ok_or_else(|| ModelError::MissingPortalFlow {
                        level,
                        edge: here.edges[e].id.clone(),
                    })
            })
            .collect()
    }

    /// Plain-edge count of the longest fully expanded path of top-level OD
    /// `od` (portals replaced by the longest path of their target OD).
    pub fn longest_path_bound(&self, od: usize) -> Result<usize, ModelError> {
        Ok(self.longest_path_bounds()?[od])
    }

    /// [`Network::longest_path_bound`] for every top-level OD.
    pub fn longest_path_bounds(&self) -> Result<Vec<usize>, ModelError> {
        let mut below: Vec<usize> = Vec::new();
        for k in (0..self.levels.len()).rev() {
            let level = &self.levels[k];
            let lengths: Vec<i64> = level
                .edges
                .iter()
                .map(|e| match e.kind {
                    LevelEdgeKind::Plain { .. } => 1,
                    LevelEdgeKind::Portal { target_od } => below[target_od] as i64,
                })
                .collect();
            let per_dest: Vec<Vec<i64>> = level
                .destinations
                .iter()
                .map(|&d| {
                    longest_to(level, &lengths, d, self.walk_cap()).ok_or(ModelError::Unbounded(k))
                })
                .collect::<Result<_, _>>()?;
            below = level
                .ods
                .iter()
                .map(|od| per_dest[od.dest_slot][od.origin].max(0) as usize)
                .collect();
        }
        Ok(below)
    }
}

// longest edge-length walk to `dest`, absorbing at `dest`; i64::MIN marks
// nodes that cannot reach it
fn longest_to(level: &Level, lengths: &[i64], dest: usize, cap: Option<usize>) -> Option<Vec<i64>> {
    let n = level.node_count();
    let mut best = vec![i64::MIN; n];
    best[dest] = 0;
    let relax = |v: usize, best: &[i64]| -> i64 {
        level.out_edges[v]
            .iter()
            .filter_map(|&e| {
                let u = level.edges[e].to;
                (best[u] != i64::MIN).then(|| lengths[e] + best[u])
            })
            .max()
            .unwrap_or(i64::MIN)
    };
    if let Some(topo) = &level.topo {
        for &v in topo.iter().rev() {
            if v != dest {
                best[v] = relax(v, &best);
            }
        }
        return Some(best);
    }
    let cap = cap?;
    for _ in 0..cap {
        let prev = best.clone();
        for v in 0..n {
            if v != dest {
                best[v] = relax(v, &prev);
            }
        }
    }
    Some(best)
}
