//! Smooth part of the dual problem and network loading.
//!
//! For a vector `t` of times on plain edges, each level is weighted bottom-up:
//! plain edges carry `t_e`, portal edges carry the soft-min distance of their
//! target OD pair one level down. Soft-min distances to a destination are
//!
//! ```text
//! ρ(v) = −γ · ln Σ_{paths v→dest} exp(−weight(path)/γ)
//! ```
//!
//! computed by a log-sum-exp relaxation in reverse topological order. The
//! smooth dual value is `Σ_w d_w·(−ρ(origin_w))` over top-level OD pairs and
//! its gradient is minus the logit edge flows, obtained by pushing demand
//! forward with edge-choice probabilities `exp(−(w_vu + ρ(u) − ρ(v))/γ)`.
//!
//! Everything here is a pure function of `(network, t)` and runs sequentially
//! in a fixed order, so results are bit-identical across runs.

use thiserror::Error;

use crate::costs::LinkCost;
use crate::model::{Level, LevelEdgeKind, Network};

/// Probabilities below this are flushed to zero.
pub const PROBABILITY_FLOOR: f64 = 1e-300;
/// Allowed deviation of outgoing choice probabilities from 1.
pub const PROBABILITY_MASS_TOLERANCE: f64 = 1e-9;
/// Relative change under which the cyclic relaxation counts as converged.
const CYCLIC_CONVERGENCE: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LoadingError {
    #[error("expected {expected} edge times, got {got}")]
    WrongDimension { expected: usize, got: usize },
    #[error("level {level}: non-finite weight on edge {edge:?}")]
    NonFiniteWeight { level: usize, edge: String },
    #[error("level {level}: od pair {od} cannot reach its destination")]
    NoPath { level: usize, od: usize },
    #[error("level {level}: soft-min relaxation did not settle within the walk cap {cap}")]
    CapExceeded { level: usize, cap: usize },
    #[error("level {level}: cyclic graph and no walk cap")]
    MissingCap { level: usize },
    #[error("level {level}: outgoing choice probabilities at node {node:?} sum to {sum}")]
    ProbabilityLeak {
        level: usize,
        node: String,
        sum: f64,
    },
    #[error("time {t} on edge {edge:?} is outside the conjugate domain")]
    OutsideConjugateDomain { edge: String, t: f64 },
    #[error("inconsistent flows: {0}")]
    InconsistentFlows(String),
    #[error("negative path flow {flow} at level {level}, od {od}")]
    NegativePathFlow { level: usize, od: usize, flow: f64 },
}

/// The dual variable: one time per plain edge, aligned with
/// [`Network::plain_edges`].
#[derive(Debug, Clone, PartialEq)]
pub struct DualPoint(pub Vec<f64>);

impl DualPoint {
    /// Free-flow times `τ_e(0)`, the canonical start point.
    pub fn free_flow(net: &Network) -> Self {
        DualPoint(
            net.plain_costs()
                .iter()
                .map(LinkCost::free_flow_time)
                .collect(),
        )
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Whether every coordinate lies in its edge's conjugate domain.
    pub fn in_domain(&self, net: &Network) -> bool {
        self.0.len() == net.plain_costs().len()
            && self
                .0
                .iter()
                .zip(net.plain_costs())
                .all(|(&t, c)| c.domain().contains(t))
    }
}

/// Edge weights of one level (plain: `t_e`; portal: soft-min value of the
/// target OD one level down), indexed by edge.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelWeights(pub Vec<f64>);

/// Per-level result of a loading.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelLoad {
    pub weights: Vec<f64>,
    /// Soft-min potentials per destination slot of the level.
    pub potentials: Vec<Vec<f64>>,
    /// Flow on every edge (plain and portal).
    pub flows: Vec<f64>,
    /// Demand of every OD pair (exogenous at level 0, induced below).
    pub demands: Vec<f64>,
    /// `Σ_w Σ_p x_p ln(x_p / d_w)` over the level's logit path measure,
    /// accumulated edge by edge through the chain rule of entropy.
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadResult {
    /// `γ¹ψ¹(t/γ¹)`, the smooth dual value.
    pub psi1: f64,
    pub levels: Vec<LevelLoad>,
}

impl LoadResult {
    /// Flows on plain edges, aligned with the dual variable.
    pub fn plain_flows(&self, net: &Network) -> Vec<f64> {
        net.plain_edges()
            .iter()
            .map(|r| self.levels[r.level].flows[r.edge])
            .collect()
    }

    /// Gradient of the smooth dual part: minus the plain-edge flows.
    pub fn gradient(&self, net: &Network) -> Vec<f64> {
        self.plain_flows(net).into_iter().map(|f| -f).collect()
    }

    pub fn level_flows(&self) -> Vec<Vec<f64>> {
        self.levels.iter().map(|l| l.flows.clone()).collect()
    }

    pub fn level_entropies(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.entropy).collect()
    }
}

/// Soft-min `−γ ln Σ exp(−x_i/γ)` over finite `xs`, shifted by the minimum.
pub fn softmin(xs: impl IntoIterator<Item = f64> + Clone, gamma: f64) -> f64 {
    let m = xs.clone().into_iter().fold(f64::INFINITY, f64::min);
    if !m.is_finite() {
        return f64::INFINITY;
    }
    let s: f64 = xs.into_iter().map(|x| (-(x - m) / gamma).exp()).sum();
    m - gamma * s.ln()
}

/// Soft-min distances from every node to `dest` on one level.
///
/// DAG levels are solved exactly in one reverse-topological pass. Cyclic
/// levels sum over walks: the relaxation is iterated up to `cap` rounds and
/// must settle before the cap is reached. Unreachable nodes map to `+∞`.
pub fn softmin_potentials(
    level: &Level,
    weights: &[f64],
    gamma: f64,
    dest: usize,
    cap: Option<usize>,
) -> Result<Vec<f64>, PotentialError> {
    let n = level.node_count();
    let mut rho = vec![f64::INFINITY; n];
    rho[dest] = 0.0;
    let relax = |v: usize, rho: &[f64]| {
        let terms = level.out_edges[v].iter().filter_map(|&e| {
            let r = rho[level.edges[e].to];
            r.is_finite().then(|| weights[e] + r)
        });
        softmin(terms, gamma)
    };
    if let Some(topo) = &level.topo {
        for &v in topo.iter().rev() {
            if v != dest {
                rho[v] = relax(v, &rho);
            }
        }
        return Ok(rho);
    }
    let cap = cap.ok_or(PotentialError::MissingCap)?;
    for _ in 0..cap {
        let prev = rho.clone();
        let mut settled = true;
        for v in 0..n {
            if v == dest {
                continue;
            }
            rho[v] = relax(v, &prev);
            let (a, b) = (rho[v], prev[v]);
            let same = (a == b)
                || (a.is_finite()
                    && b.is_finite()
                    && (a - b).abs() <= CYCLIC_CONVERGENCE * (1.0 + a.abs()));
            settled &= same;
        }
        if settled {
            return Ok(rho);
        }
    }
    Err(PotentialError::CapExceeded(cap))
}

/// Failure modes of [`softmin_potentials`], without level context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PotentialError {
    #[error("cyclic graph and no walk cap")]
    MissingCap,
    #[error("relaxation did not settle within {0} rounds")]
    CapExceeded(usize),
}

fn lift(level: usize) -> impl Fn(PotentialError) -> LoadingError {
    move |e| match e {
        PotentialError::MissingCap => LoadingError::MissingCap { level },
        PotentialError::CapExceeded(cap) => LoadingError::CapExceeded { level, cap },
    }
}

fn check_dimension(net: &Network, t: &DualPoint) -> Result<(), LoadingError> {
    let expected = net.plain_edges().len();
    if t.len() != expected {
        return Err(LoadingError::WrongDimension {
            expected,
            got: t.len(),
        });
    }
    Ok(())
}

/// Edge weights and per-destination potentials of one level.
type LevelSweep = (Vec<f64>, Vec<Vec<f64>>);

// Bottom-up sweep: weights and potentials (per destination) of every level.
fn sweep_up(net: &Network, t: &DualPoint) -> Result<Vec<LevelSweep>, LoadingError> {
    check_dimension(net, t)?;
    let m = net.level_count();
    let mut out: Vec<LevelSweep> = Vec::with_capacity(m);
    // soft-min value of each OD of the level below
    let mut below: Vec<f64> = Vec::new();
    for k in (0..m).rev() {
        let level = net.level(k);
        let weights: Vec<f64> = level
            .edges
            .iter()
            .map(|e| match e.kind {
                LevelEdgeKind::Plain { index, .. } => t.0[index],
                LevelEdgeKind::Portal { target_od } => below[target_od],
            })
            .collect();
        if let Some(e) = weights.iter().position(|w| !w.is_finite()) {
            return Err(LoadingError::NonFiniteWeight {
                level: k,
                edge: level.edges[e].id.clone(),
            });
        }
        let potentials = level
            .destinations
            .iter()
            .map(|&d| {
                softmin_potentials(level, &weights, level.gamma, d, net.walk_cap()).map_err(lift(k))
            })
            .collect::<Result<Vec<_>, _>>()?;
        below = level
            .ods
            .iter()
            .enumerate()
            .map(|(oi, od)| {
                let r = potentials[od.dest_slot][od.origin];
                if r.is_finite() {
                    Ok(r)
                } else {
                    Err(LoadingError::NoPath { level: k, od: oi })
                }
            })
            .collect::<Result<_, _>>()?;
        out.push((weights, potentials));
    }
    out.reverse();
    Ok(out)
}

/// Edge weights of every level at `t`, portal weights filled bottom-up.
pub fn hierarchical_weights(
    net: &Network,
    t: &DualPoint,
) -> Result<Vec<LevelWeights>, LoadingError> {
    Ok(sweep_up(net, t)?
        .into_iter()
        .map(|(w, _)| LevelWeights(w))
        .collect())
}

/// `γ¹ψ¹(t/γ¹) = Σ_w d_w · (−ρ(origin_w))` over top-level OD pairs.
pub fn dual_smooth_value(net: &Network, t: &DualPoint) -> Result<f64, LoadingError> {
    let swept = sweep_up(net, t)?;
    Ok(top_value(net, &swept[0].1))
}

fn top_value(net: &Network, potentials: &[Vec<f64>]) -> f64 {
    net.level(0)
        .ods
        .iter()
        .map(|od| -od.demand.unwrap_or(0.0) * potentials[od.dest_slot][od.origin])
        .sum()
}

/// Logit network loading at `t`: flows on every edge of every level, induced
/// demands, and per-level path entropies.
pub fn network_loading(net: &Network, t: &DualPoint) -> Result<LoadResult, LoadingError> {
    let swept = sweep_up(net, t)?;
    let psi1 = top_value(net, &swept[0].1);
    let mut levels = Vec::with_capacity(net.level_count());
    let mut demands = net.top_demands();
    for (k, (weights, potentials)) in swept.into_iter().enumerate() {
        let level = net.level(k);
        let mut flows = vec![0.0; level.edges.len()];
        let mut entropy = 0.0;
        for (slot, &dest) in level.destinations.iter().enumerate() {
            let mut inject = vec![0.0; level.node_count()];
            for (od, &d) in level.ods.iter().zip(&demands) {
                if od.dest_slot == slot {
                    inject[od.origin] += d;
                }
            }
            let ctx = Propagation {
                k,
                level,
                weights: &weights,
                rho: &potentials[slot],
                dest,
                gamma: level.gamma,
            };
            entropy += ctx.push(inject, &mut flows, net.walk_cap())?;
        }
        let next = if k + 1 < net.level_count() {
            net.portal_demand_map(k, &flows)
                .map_err(|e| LoadingError::InconsistentFlows(e.to_string()))?
        } else {
            Vec::new()
        };
        levels.push(LevelLoad {
            weights,
            potentials,
            flows,
            demands,
            entropy,
        });
        demands = next;
    }
    Ok(LoadResult { psi1, levels })
}

struct Propagation<'a> {
    k: usize,
    level: &'a Level,
    weights: &'a [f64],
    rho: &'a [f64],
    dest: usize,
    gamma: f64,
}

impl Propagation<'_> {
    // choice probabilities of the outgoing edges of v
    fn choices(&self, v: usize) -> Result<Vec<(usize, f64)>, LoadingError> {
        let rv = self.rho[v];
        let mut out = Vec::with_capacity(self.level.out_edges[v].len());
        let mut sum = 0.0;
        for &e in &self.level.out_edges[v] {
            let ru = self.rho[self.level.edges[e].to];
            if !ru.is_finite() {
                continue;
            }
            let p = (-(self.weights[e] + ru - rv) / self.gamma).exp();
            sum += p;
            out.push((e, p));
        }
        if (sum - 1.0).abs() > PROBABILITY_MASS_TOLERANCE {
            return Err(LoadingError::ProbabilityLeak {
                level: self.k,
                node: self.level.node_ids[v].clone(),
                sum,
            });
        }
        // normalized over the node's out-edges
        for (_, p) in &mut out {
            *p /= sum;
            if *p < PROBABILITY_FLOOR {
                *p = 0.0;
            }
        }
        Ok(out)
    }

    // Pushes node mass toward `dest`; returns Σ flow·ln p.
    fn push(
        &self,
        inject: Vec<f64>,
        flows: &mut [f64],
        cap: Option<usize>,
    ) -> Result<f64, LoadingError> {
        let mut entropy = 0.0;
        if let Some(topo) = &self.level.topo {
            let mut mass = inject;
            for &v in topo {
                if v == self.dest || mass[v] == 0.0 {
                    continue;
                }
                for (e, p) in self.choices(v)? {
                    let q = mass[v] * p;
                    flows[e] += q;
                    mass[self.level.edges[e].to] += q;
                    if p > 0.0 {
                        entropy += q * p.ln();
                    }
                }
            }
            return Ok(entropy);
        }
        // cyclic: propagate waves of mass until what is left in transit is negligible
        let cap = cap.ok_or(LoadingError::MissingCap { level: self.k })?;
        let total: f64 = inject.iter().sum();
        let choices: Vec<Option<Vec<(usize, f64)>>> = (0..self.level.node_count())
            .map(|v| {
                if v == self.dest || !self.rho[v].is_finite() {
                    Ok(None)
                } else {
                    self.choices(v).map(Some)
                }
            })
            .collect::<Result<_, _>>()?;
        let mut wave = inject;
        wave[self.dest] = 0.0;
        for _ in 0..cap {
            let in_transit: f64 = wave.iter().sum();
            if in_transit <= CYCLIC_CONVERGENCE * total {
                return Ok(entropy);
            }
            let mut next = vec![0.0; wave.len()];
            for (v, &mv) in wave.iter().enumerate() {
                if mv == 0.0 {
                    continue;
                }
                for &(e, p) in choices[v].as_deref().unwrap_or(&[]) {
                    let q = mv * p;
                    flows[e] += q;
                    let u = self.level.edges[e].to;
                    if u != self.dest {
                        next[u] += q;
                    }
                    if p > 0.0 {
                        entropy += q * p.ln();
                    }
                }
            }
            wave = next;
        }
        if wave.iter().sum::<f64>() <= CYCLIC_CONVERGENCE * total {
            Ok(entropy)
        } else {
            Err(LoadingError::CapExceeded { level: self.k, cap })
        }
    }
}

/// `γ¹ψ¹(t/γ¹) + Σ_e σ*_e(t_e)`, the objective the solver minimizes.
pub fn dual_objective(net: &Network, t: &DualPoint) -> Result<f64, LoadingError> {
    let smooth = dual_smooth_value(net, t)?;
    Ok(smooth + conjugate_sum(net, t)?)
}

/// `Σ_e σ*_e(t_e)`.
pub fn conjugate_sum(net: &Network, t: &DualPoint) -> Result<f64, LoadingError> {
    check_dimension(net, t)?;
    let mut sum = 0.0;
    for (i, (c, &te)) in net.plain_costs().iter().zip(&t.0).enumerate() {
        let v = c.conjugate_value(te);
        if !v.is_finite() {
            return Err(LoadingError::OutsideConjugateDomain {
                edge: net.plain_edge_id(i).to_string(),
                t: te,
            });
        }
        sum += v;
    }
    Ok(sum)
}

/// Path flows for one OD pair.
#[derive(Debug, Clone, PartialEq)]
pub struct OdPathFlows {
    pub demand: f64,
    /// `(edge indices at the OD's level, flow)`.
    pub paths: Vec<(Vec<usize>, f64)>,
}

/// Path flows of every OD pair of every level: `levels[k][od]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathFlowTable {
    pub levels: Vec<Vec<OdPathFlows>>,
}

/// Enumerated per-level paths: `levels[k][od]` is a list of edge sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub levels: Vec<Vec<Vec<Vec<usize>>>>,
}

impl PathSet {
    pub fn count(&self) -> usize {
        self.levels.iter().flatten().map(Vec::len).sum()
    }
}

impl PathFlowTable {
    /// All-zero table over `paths`.
    pub fn zeros(paths: &PathSet) -> Self {
        PathFlowTable {
            levels: paths
                .levels
                .iter()
                .map(|ods| {
                    ods.iter()
                        .map(|ps| OdPathFlows {
                            demand: 0.0,
                            paths: ps.iter().map(|p| (p.clone(), 0.0)).collect(),
                        })
                        .collect()
                })
                .collect(),
        }
    }

    /// `self += weight · other` over an identical path layout.
    pub fn add_scaled(&mut self, other: &PathFlowTable, weight: f64) {
        for (a, b) in self
            .levels
            .iter_mut()
            .flatten()
            .zip(other.levels.iter().flatten())
        {
            a.demand += weight * b.demand;
            for (pa, pb) in a.paths.iter_mut().zip(&b.paths) {
                pa.1 += weight * pb.1;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for od in self.levels.iter_mut().flatten() {
            od.demand *= factor;
            for p in &mut od.paths {
                p.1 *= factor;
            }
        }
    }

    /// Edge flows `Θx` per level.
    pub fn edge_flows(&self, net: &Network) -> Vec<Vec<f64>> {
        self.levels
            .iter()
            .enumerate()
            .map(|(k, ods)| {
                let mut f = vec![0.0; net.level(k).edges.len()];
                for od in ods {
                    for (p, x) in &od.paths {
                        for &e in p {
                            f[e] += x;
                        }
                    }
                }
                f
            })
            .collect()
    }
}

/// Logit path flows implied by a loading, for the listed paths:
/// `x_p = d_w · exp(−(Σ_{e∈p} w_e − ρ(origin))/γ)`.
pub fn path_flows_from_load(net: &Network, load: &LoadResult, paths: &PathSet) -> PathFlowTable {
    let levels = paths
        .levels
        .iter()
        .enumerate()
        .map(|(k, ods)| {
            let level = net.level(k);
            let ll = &load.levels[k];
            ods.iter()
                .enumerate()
                .map(|(oi, ps)| {
                    let od = &level.ods[oi];
                    let d = ll.demands[oi];
                    let rho_o = ll.potentials[od.dest_slot][od.origin];
                    let paths = ps
                        .iter()
                        .map(|p| {
                            let g: f64 = p.iter().map(|&e| ll.weights[e]).sum();
                            let mut share = (-(g - rho_o) / level.gamma).exp();
                            if share < PROBABILITY_FLOOR {
                                share = 0.0;
                            }
                            (p.clone(), d * share)
                        })
                        .collect();
                    OdPathFlows { demand: d, paths }
                })
                .collect()
        })
        .collect();
    PathFlowTable { levels }
}

fn xlogx_ratio(x: f64, d: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * (x / d).ln()
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

/// `Σ_e σ_e(f_e)` over plain edges, from per-level edge flows.
pub fn cost_integral_sum(net: &Network, flows: &[Vec<f64>]) -> Result<f64, LoadingError> {
    let mut sum = 0.0;
    for r in net.plain_edges() {
        let edge = &net.level(r.level).edges[r.edge];
        let LevelEdgeKind::Plain { cost, .. } = edge.kind else {
            unreachable!()
        };
        // roundoff can leave −1e−17 on an unused edge
        let f = flows[r.level][r.edge].max(0.0);
        sum += cost
            .cost_integral(f)
            .map_err(|e| LoadingError::InconsistentFlows(format!("edge {:?}: {e}", edge.id)))?;
    }
    Ok(sum)
}

/// Nested primal objective
/// `Ψ(x, f) = Σ_k [ Σ_{plain e} σ_e(f_e) + γ^k Σ_w Σ_p x_p ln(x_p/d_w) ]`
/// with `0·ln 0 = 0` and inner demands equal to portal flows.
pub fn primal_objective(
    net: &Network,
    x: &PathFlowTable,
    flows: &[Vec<f64>],
) -> Result<f64, LoadingError> {
    if x.levels.len() != net.level_count() || flows.len() != net.level_count() {
        return Err(LoadingError::InconsistentFlows(
            "level count mismatch".into(),
        ));
    }
    let theta_x = x.edge_flows(net);
    let mut entropy_part = 0.0;
    for (k, ods) in x.levels.iter().enumerate() {
        let level = net.level(k);
        if ods.len() != level.ods.len() || flows[k].len() != level.edges.len() {
            return Err(LoadingError::InconsistentFlows(format!(
                "level {k}: shape mismatch"
            )));
        }
        let expected: Vec<f64> = if k == 0 {
            net.top_demands()
        } else {
            net.portal_demand_map(k - 1, &flows[k - 1])
                .map_err(|e| LoadingError::InconsistentFlows(e.to_string()))?
        };
        let mut level_sum = 0.0;
        for (oi, od) in ods.iter().enumerate() {
            if !close(od.demand, expected[oi]) {
                return Err(LoadingError::InconsistentFlows(format!(
                    "level {k}, od {oi}: demand {} but expected {}",
                    od.demand, expected[oi]
                )));
            }
            let mut total = 0.0;
            for (_, xp) in &od.paths {
                if *xp < 0.0 {
                    return Err(LoadingError::NegativePathFlow {
                        level: k,
                        od: oi,
                        flow: *xp,
                    });
                }
                total += xp;
                level_sum += xlogx_ratio(*xp, od.demand);
            }
            if !close(total, od.demand) {
                return Err(LoadingError::InconsistentFlows(format!(
                    "level {k}, od {oi}: path flows sum to {total}, demand {}",
                    od.demand
                )));
            }
        }
        for (e, (&a, &b)) in theta_x[k].iter().zip(&flows[k]).enumerate() {
            if !close(a, b) {
                return Err(LoadingError::InconsistentFlows(format!(
                    "level {k}, edge {:?}: path flows give {a}, edge flow is {b}",
                    level.edges[e].id
                )));
            }
        }
        entropy_part += level.gamma * level_sum;
    }
    Ok(cost_integral_sum(net, flows)? + entropy_part)
}

/// Path-free primal value: `Σ σ_e(f_e) + Σ_k γ^k · entropy_k`, with the
/// per-level entropies as accumulated by [`network_loading`] (or averages of
/// them).
pub fn primal_objective_path_free(
    net: &Network,
    flows: &[Vec<f64>],
    entropies: &[f64],
) -> Result<f64, LoadingError> {
    let ent: f64 = net
        .levels()
        .iter()
        .zip(entropies)
        .map(|(l, h)| l.gamma * h)
        .sum();
    Ok(cost_integral_sum(net, flows)? + ent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Edge, LevelGraph, NetworkHierarchy, OdPair};

    fn aff(a: f64, b: f64) -> LinkCost {
        LinkCost::affine(a, b).unwrap()
    }

    fn names(ids: &[&str]) -> Vec<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    fn parallel(costs: &[LinkCost], demand: f64, gamma: f64) -> Network {
        let edges = costs
            .iter()
            .enumerate()
            .map(|(i, &c)| Edge::plain(&format!("e{i}"), "o", "d", c))
            .collect();
        Network::new(NetworkHierarchy {
            gammas: vec![gamma],
            levels: vec![LevelGraph {
                nodes: names(&["o", "d"]),
                edges,
                od_pairs: vec![OdPair::new("o", "d", Some(demand))],
            }],
            walk_cap: None,
        })
        .unwrap()
    }

    // chain of m single-edge levels; level k: edge plain "t{k}" then portal
    fn chain(times_free: &[f64]) -> Network {
        let m = times_free.len();
        let levels = (0..m)
            .map(|k| {
                let mut edges = vec![Edge::plain(
                    &format!("t{k}"),
                    "a",
                    "b",
                    LinkCost::constant(times_free[k]).unwrap(),
                )];
                let mut nodes = names(&["a", "b"]);
                if k + 1 < m {
                    nodes.push("c".into());
                    edges.push(Edge::portal(&format!("p{k}"), "b", "c", k + 1, 0));
                }
                let dest = if k + 1 < m { "c" } else { "b" };
                LevelGraph {
                    nodes,
                    edges,
                    od_pairs: vec![OdPair::new("a", dest, (k == 0).then_some(1.0))],
                }
            })
            .collect();
        Network::new(NetworkHierarchy {
            gammas: vec![1.0; m],
            levels,
            walk_cap: None,
        })
        .unwrap()
    }

    #[test]
    fn softmin_examples() {
        let n = parallel(&[aff(5.0, 1.0)], 1.0, 1.0);
        let rho = softmin_potentials(n.level(0), &[5.0], 1.0, 1, None).unwrap();
        assert_eq!(rho[0], 5.0);

        let n = parallel(&[aff(1.0, 1.0), aff(1.0, 1.0)], 1.0, 1.0);
        let rho = softmin_potentials(n.level(0), &[1.0, 1.0], 1.0, 1, None).unwrap();
        assert!((rho[0] - (1.0 - 2f64.ln())).abs() < 1e-15);
        let rho = softmin_potentials(n.level(0), &[1.0, 1.0], 2.0, 1, None).unwrap();
        assert!((rho[0] - (1.0 - 2.0 * 2f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn softmin_is_overflow_safe() {
        assert!((softmin([1e6, 1e6], 1e-3) - (1e6 - 1e-3 * 2f64.ln())).abs() < 1e-9);
        assert_eq!(softmin(std::iter::empty(), 1.0), f64::INFINITY);
    }

    #[test]
    fn weights_single_level_are_times() {
        let n = parallel(&[aff(1.0, 1.0), aff(2.0, 1.0)], 1.0, 1.0);
        let w = hierarchical_weights(&n, &DualPoint(vec![3.0, 4.0])).unwrap();
        assert_eq!(w, vec![LevelWeights(vec![3.0, 4.0])]);
    }

    #[test]
    fn weights_lift_one_level() {
        let h = NetworkHierarchy {
            gammas: vec![1.0, 1.0],
            levels: vec![
                LevelGraph {
                    nodes: names(&["o", "d"]),
                    edges: vec![Edge::portal("p", "o", "d", 1, 0)],
                    od_pairs: vec![OdPair::new("o", "d", Some(1.0))],
                },
                LevelGraph {
                    nodes: names(&["a", "b"]),
                    edges: vec![
                        Edge::plain("x", "a", "b", aff(1.0, 1.0)),
                        Edge::plain("y", "a", "b", aff(1.0, 1.0)),
                    ],
                    od_pairs: vec![OdPair::new("a", "b", None)],
                },
            ],
            walk_cap: None,
        };
        let n = Network::new(h).unwrap();
        let w = hierarchical_weights(&n, &DualPoint(vec![1.0, 1.0])).unwrap();
        assert!((w[0].0[0] - (1.0 - 2f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn weights_three_level_chain() {
        let n = chain(&[2.0, 3.0, 4.0]);
        let w = hierarchical_weights(&n, &DualPoint(vec![2.0, 3.0, 4.0])).unwrap();
        // level 1 sees t1 + portal(4); level 0 portal carries 3 + 4
        assert_eq!(w[1].0, vec![3.0, 4.0]);
        assert_eq!(w[0].0, vec![2.0, 7.0]);
        assert_eq!(
            dual_smooth_value(&n, &DualPoint(vec![2.0, 3.0, 4.0])).unwrap(),
            -9.0
        );
    }

    #[test]
    fn dual_smooth_examples() {
        let n = parallel(&[aff(5.0, 1.0)], 1.0, 1.0);
        assert_eq!(dual_smooth_value(&n, &DualPoint(vec![5.0])).unwrap(), -5.0);
        let n = parallel(&[aff(1.0, 1.0), aff(1.0, 1.0)], 2.0, 1.0);
        let v = dual_smooth_value(&n, &DualPoint(vec![1.0, 1.0])).unwrap();
        assert!((v - 2.0 * (2f64.ln() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn dual_smooth_additive_over_od_pairs() {
        let h = NetworkHierarchy {
            gammas: vec![0.7],
            levels: vec![LevelGraph {
                nodes: names(&["a", "b", "c", "d"]),
                edges: vec![
                    Edge::plain("x", "a", "b", aff(1.0, 1.0)),
                    Edge::plain("y", "a", "b", aff(2.0, 1.0)),
                    Edge::plain("z", "c", "d", aff(1.5, 1.0)),
                ],
                od_pairs: vec![
                    OdPair::new("a", "b", Some(1.5)),
                    OdPair::new("c", "d", Some(0.5)),
                ],
            }],
            walk_cap: None,
        };
        let n = Network::new(h).unwrap();
        let t = DualPoint(vec![1.2, 2.5, 3.0]);
        let a = parallel(&[aff(1.0, 1.0), aff(2.0, 1.0)], 1.5, 0.7);
        let b = parallel(&[aff(1.5, 1.0)], 0.5, 0.7);
        let sum = dual_smooth_value(&a, &DualPoint(vec![1.2, 2.5])).unwrap()
            + dual_smooth_value(&b, &DualPoint(vec![3.0])).unwrap();
        assert!((dual_smooth_value(&n, &t).unwrap() - sum).abs() < 1e-14);
    }

    #[test]
    fn loading_examples() {
        let n = parallel(&[aff(1.0, 1.0), aff(1.0, 1.0)], 4.0, 1.0);
        let r = network_loading(&n, &DualPoint(vec![5.0, 5.0])).unwrap();
        assert!(r.levels[0].flows.iter().all(|f| (f - 2.0).abs() < 1e-15));

        let n = parallel(&[aff(0.0, 1.0), aff(0.0, 1.0)], 1.0, 1.0);
        let r = network_loading(&n, &DualPoint(vec![0.0, 2f64.ln()])).unwrap();
        assert!((r.levels[0].flows[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.levels[0].flows[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn loading_accepts_times_below_free_flow() {
        let n = parallel(&[aff(1.0, 1.0), aff(1.0, 1.0)], 1.0, 1.0);
        assert!(network_loading(&n, &DualPoint(vec![-3.0, 0.5])).is_ok());
    }

    #[test]
    fn wrong_dimension() {
        let n = parallel(&[aff(1.0, 1.0)], 1.0, 1.0);
        assert_eq!(
            network_loading(&n, &DualPoint(vec![1.0, 2.0])),
            Err(LoadingError::WrongDimension {
                expected: 1,
                got: 2
            })
        );
    }

    #[test]
    fn entropy_of_uniform_split() {
        let n = parallel(&[aff(1.0, 1.0), aff(1.0, 1.0)], 1.0, 1.0);
        let r = network_loading(&n, &DualPoint(vec![1.0, 1.0])).unwrap();
        assert!((r.levels[0].entropy + 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn primal_objective_examples() {
        let n = parallel(&[aff(1.0, 1.0), aff(1.0, 1.0)], 1.0, 1.0);
        let x = PathFlowTable {
            levels: vec![vec![OdPathFlows {
                demand: 1.0,
                paths: vec![(vec![0], 0.5), (vec![1], 0.5)],
            }]],
        };
        let v = primal_objective(&n, &x, &[vec![0.5, 0.5]]).unwrap();
        assert!((v - (2.0 * 0.625 - 2f64.ln())).abs() < 1e-15);

        let x = PathFlowTable {
            levels: vec![vec![OdPathFlows {
                demand: 1.0,
                paths: vec![(vec![0], 1.0), (vec![1], 0.0)],
            }]],
        };
        assert_eq!(primal_objective(&n, &x, &[vec![1.0, 0.0]]).unwrap(), 1.5);
    }

    #[test]
    fn primal_objective_rejects_bad_input() {
        let n = parallel(&[aff(1.0, 1.0), aff(1.0, 1.0)], 1.0, 1.0);
        let x = PathFlowTable {
            levels: vec![vec![OdPathFlows {
                demand: 1.0,
                paths: vec![(vec![0], 1.2), (vec![1], -0.2)],
            }]],
        };
        assert!(matches!(
            primal_objective(&n, &x, &[vec![1.2, -0.2]]),
            Err(LoadingError::NegativePathFlow { .. })
        ));
        let x = PathFlowTable {
            levels: vec![vec![OdPathFlows {
                demand: 1.0,
                paths: vec![(vec![0], 0.5), (vec![1], 0.5)],
            }]],
        };
        assert!(matches!(
            primal_objective(&n, &x, &[vec![0.7, 0.3]]),
            Err(LoadingError::InconsistentFlows(_))
        ));
    }

    #[test]
    fn dual_objective_at_free_flow_is_smooth_part() {
        let n = parallel(&[aff(1.0, 1.0), aff(2.0, 1.0)], 1.0, 1.0);
        let t = DualPoint::free_flow(&n);
        assert_eq!(
            dual_objective(&n, &t).unwrap(),
            dual_smooth_value(&n, &t).unwrap()
        );
    }

    #[test]
    fn dual_objective_two_edge_instance() {
        let n = parallel(&[aff(1.0, 1.0), aff(2.0, 1.0)], 1.0, 1.0);
        let t = DualPoint(vec![2.0, 2.5]);
        // independent scalar evaluation
        let psi = ((-2.0f64).exp() + (-2.5f64).exp()).ln();
        let expected = psi + 0.5 + 0.125;
        assert!((dual_objective(&n, &t).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn constant_cost_outside_domain() {
        let n = parallel(&[LinkCost::constant(2.0).unwrap()], 1.0, 1.0);
        assert!(matches!(
            dual_objective(&n, &DualPoint(vec![2.5])),
            Err(LoadingError::OutsideConjugateDomain { .. })
        ));
    }

    #[test]
    fn cyclic_level_with_cap() {
        // o -> d directly, plus a 2-cycle o <-> x that can be traversed repeatedly
        let h = NetworkHierarchy {
            gammas: vec![1.0],
            levels: vec![LevelGraph {
                nodes: names(&["o", "x", "d"]),
                edges: vec![
                    Edge::plain("od", "o", "d", aff(1.0, 1.0)),
                    Edge::plain("ox", "o", "x", aff(1.0, 1.0)),
                    Edge::plain("xo", "x", "o", aff(1.0, 1.0)),
                ],
                od_pairs: vec![OdPair::new("o", "d", Some(1.0))],
            }],
            walk_cap: Some(500),
        };
        let n = Network::new(h).unwrap();
        let t = DualPoint(vec![1.0, 1.0, 1.0]);
        // walks: od preceded by j loops (cost 2 each): Σ_j e^{-1-2j} = e^{-1}/(1-e^{-2})
        let expected = 1.0 + (1.0 - (-2.0f64).exp()).ln();
        let v = dual_smooth_value(&n, &t).unwrap();
        assert!((v + expected).abs() < 1e-12, "{v} vs {}", -expected);
        let r = network_loading(&n, &t).unwrap();
        assert!((r.levels[0].flows[0] - 1.0).abs() < 1e-12);
        // expected loop count e^{-2}/(1-e^{-2}) per traversal direction
        let loops = (-2.0f64).exp() / (1.0 - (-2.0f64).exp());
        assert!((r.levels[0].flows[1] - loops).abs() < 1e-12);

        let mut h = n.hierarchy().clone();
        h.walk_cap = Some(3);
        let n = Network::new(h).unwrap();
        assert!(matches!(
            dual_smooth_value(&n, &t),
            Err(LoadingError::CapExceeded { .. })
        ));
    }
}
