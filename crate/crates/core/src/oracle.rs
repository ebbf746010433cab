//! Brute-force reference implementations.
//!
//! Nothing in here shares code with the dynamic programs of [`crate::loading`]:
//! paths are enumerated explicitly, path costs are summed edge by edge, and
//! portal costs are log-sum-exps over explicit lists of lower-level paths.
//! All routines enforce hard budgets and are meant for small test networks.

use std::collections::HashMap;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::loading::{DualPoint, OdPathFlows, PathFlowTable, PathSet};
use crate::model::{LevelEdgeKind, Network, OdRef};

/// Default cap on enumerated paths.
pub const DEFAULT_PATH_BUDGET: usize = 10_000;
/// Euler–Mascheroni constant; centres the Gumbel noise at zero.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("path enumeration exceeded the budget of {0}")]
    BudgetExceeded(usize),
    #[error("no path for od pair {od} at level {level}")]
    NoPath { level: usize, od: usize },
    #[error("fixed-point iteration did not converge in {0} iterations (residual {1})")]
    NoConvergence(usize, f64),
}

/// Simple paths of OD pair `od` at its own level (portals left unexpanded),
/// as edge-index sequences sorted by their edge-id sequences.
pub fn enumerate_paths(
    net: &Network,
    od: OdRef,
    budget: usize,
) -> Result<Vec<Vec<usize>>, OracleError> {
    let level = net.level(od.level);
    let pair = &level.ods[od.od];
    let mut found = Vec::new();
    let mut on_path = vec![false; level.node_count()];
    let mut stack = Vec::new();

    fn dfs(
        level: &crate::model::Level,
        v: usize,
        dest: usize,
        on_path: &mut [bool],
        stack: &mut Vec<usize>,
        found: &mut Vec<Vec<usize>>,
        budget: usize,
    ) -> Result<(), OracleError> {
        if v == dest {
            if found.len() == budget {
                return Err(OracleError::BudgetExceeded(budget));
            }
            found.push(stack.clone());
            return Ok(());
        }
        on_path[v] = true;
        for &e in &level.out_edges[v] {
            let u = level.edges[e].to;
            if !on_path[u] {
                stack.push(e);
                dfs(level, u, dest, on_path, stack, found, budget)?;
                stack.pop();
            }
        }
        on_path[v] = false;
        Ok(())
    }

    dfs(
        level,
        pair.origin,
        pair.destination,
        &mut on_path,
        &mut stack,
        &mut found,
        budget,
    )?;
    found.sort_by(|a, b| {
        let ia = a.iter().map(|&e| level.edges[e].id.as_str());
        let ib = b.iter().map(|&e| level.edges[e].id.as_str());
        ia.cmp(ib)
    });
    Ok(found)
}

/// Paths of every OD pair of every level, with a shared budget.
pub fn enumerate_all(net: &Network, budget: usize) -> Result<PathSet, OracleError> {
    let mut used = 0;
    let mut levels = Vec::with_capacity(net.level_count());
    for (k, level) in net.levels().iter().enumerate() {
        let mut ods = Vec::with_capacity(level.ods.len());
        for oi in 0..level.ods.len() {
            let paths = enumerate_paths(net, OdRef { level: k, od: oi }, budget - used)
                .map_err(|_| OracleError::BudgetExceeded(budget))?;
            used += paths.len();
            ods.push(paths);
        }
        levels.push(ods);
    }
    Ok(PathSet { levels })
}

/// A top-level path with every portal recursively replaced by a lower path.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedPath {
    /// `(level, edge index)` of each plain edge, in travel order.
    pub edges: Vec<(usize, usize)>,
    pub total_plain_edges: usize,
}

/// All fully expanded paths of OD pair `od` (any level).
pub fn expand_paths(
    net: &Network,
    od: OdRef,
    budget: usize,
) -> Result<Vec<ExpandedPath>, OracleError> {
    let mut out = Vec::new();
    for p in enumerate_paths(net, od, budget)? {
        // cartesian product over the portal edges of p
        let mut partial: Vec<Vec<(usize, usize)>> = vec![Vec::new()];
        for &e in &p {
            match net.level(od.level).edges[e].kind {
                LevelEdgeKind::Plain { .. } => {
                    partial.iter_mut().for_each(|q| q.push((od.level, e)))
                }
                LevelEdgeKind::Portal { target_od } => {
                    let subs = expand_paths(
                        net,
                        OdRef {
                            level: od.level + 1,
                            od: target_od,
                        },
                        budget,
                    )?;
                    let mut next = Vec::new();
                    for q in &partial {
                        for s in &subs {
                            if next.len() + out.len() >= budget {
                                return Err(OracleError::BudgetExceeded(budget));
                            }
                            let mut r = q.clone();
                            r.extend_from_slice(&s.edges);
                            next.push(r);
                        }
                    }
                    partial = next;
                }
            }
        }
        for edges in partial {
            if out.len() >= budget {
                return Err(OracleError::BudgetExceeded(budget));
            }
            out.push(ExpandedPath {
                total_plain_edges: edges.len(),
                edges,
            });
        }
    }
    Ok(out)
}

/// Total number of expanded top-level paths.
pub fn expanded_path_count(net: &Network, budget: usize) -> Result<usize, OracleError> {
    let mut n = 0;
    for oi in 0..net.level(0).ods.len() {
        n += expand_paths(net, OdRef { level: 0, od: oi }, budget.saturating_sub(n))?.len();
    }
    Ok(n)
}

/// Longest expanded path length, by exhaustive expansion.
pub fn longest_expanded_path(
    net: &Network,
    od: usize,
    budget: usize,
) -> Result<usize, OracleError> {
    Ok(expand_paths(net, OdRef { level: 0, od }, budget)?
        .iter()
        .map(|p| p.total_plain_edges)
        .max()
        .unwrap_or(0))
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Recursive path-cost evaluator with memoized portal values.
pub struct PathCosts<'a> {
    net: &'a Network,
    t: &'a DualPoint,
    budget: usize,
    // −γ^k ψ^k_w(t/γ^k) for (level, od)
    memo: HashMap<(usize, usize), f64>,
}

impl<'a> PathCosts<'a> {
    pub fn new(net: &'a Network, t: &'a DualPoint, budget: usize) -> Self {
        PathCosts {
            net,
            t,
            budget,
            memo: HashMap::new(),
        }
    }

    /// `g_p = Σ_{plain e∈p} t_e − Σ_{portal e∈p} γψ_e(t/γ)` for a path at `level`.
    pub fn path_cost(&mut self, path: &[usize], level: usize) -> Result<f64, OracleError> {
        let mut g = 0.0;
        for &e in path {
            g += match self.net.level(level).edges[e].kind {
                LevelEdgeKind::Plain { index, .. } => self.t.0[index],
                LevelEdgeKind::Portal { target_od } => self.portal_value(level + 1, target_od)?,
            };
        }
        Ok(g)
    }

    /// `−γψ_w(t/γ) = −γ ln Σ_p exp(−g_p/γ)` over the explicit path list.
    pub fn portal_value(&mut self, level: usize, od: usize) -> Result<f64, OracleError> {
        if let Some(&v) = self.memo.get(&(level, od)) {
            return Ok(v);
        }
        let gamma = self.net.level(level).gamma;
        let paths = enumerate_paths(self.net, OdRef { level, od }, self.budget)?;
        if paths.is_empty() {
            return Err(OracleError::NoPath { level, od });
        }
        let mut scaled = Vec::with_capacity(paths.len());
        for p in &paths {
            scaled.push(-self.path_cost(p, level)? / gamma);
        }
        let v = -gamma * log_sum_exp(&scaled);
        self.memo.insert((level, od), v);
        Ok(v)
    }
}

/// One-off [`PathCosts::path_cost`].
pub fn path_cost(
    net: &Network,
    t: &DualPoint,
    path: &[usize],
    level: usize,
) -> Result<f64, OracleError> {
    PathCosts::new(net, t, DEFAULT_PATH_BUDGET).path_cost(path, level)
}

/// Gibbs shares `d · exp(−g_p/γ) / Σ_q exp(−g_q/γ)` for explicit path costs.
pub fn logit_shares(costs: &[f64], demand: f64, gamma: f64) -> Vec<f64> {
    let scaled: Vec<f64> = costs.iter().map(|g| -g / gamma).collect();
    let z = log_sum_exp(&scaled);
    scaled.iter().map(|s| demand * (s - z).exp()).collect()
}

/// Logit path flows of one OD pair at `t`, paths in enumeration order.
pub fn logit_path_distribution(
    net: &Network,
    t: &DualPoint,
    od: OdRef,
    demand: f64,
    budget: usize,
) -> Result<OdPathFlows, OracleError> {
    let mut pc = PathCosts::new(net, t, budget);
    let paths = enumerate_paths(net, od, budget)?;
    let costs = paths
        .iter()
        .map(|p| pc.path_cost(p, od.level))
        .collect::<Result<Vec<_>, _>>()?;
    let shares = logit_shares(&costs, demand, net.level(od.level).gamma);
    Ok(OdPathFlows {
        demand,
        paths: paths.into_iter().zip(shares).collect(),
    })
}

/// Logit path flows of the whole hierarchy at `t`: top-level demands are
/// exogenous, each lower OD receives `Θx` on its binding portal.
pub fn logit_path_table(
    net: &Network,
    t: &DualPoint,
    budget: usize,
) -> Result<PathFlowTable, OracleError> {
    let mut levels: Vec<Vec<OdPathFlows>> = Vec::with_capacity(net.level_count());
    let mut demands = net.top_demands();
    for k in 0..net.level_count() {
        let rows = demands
            .iter()
            .enumerate()
            .map(|(oi, &d)| logit_path_distribution(net, t, OdRef { level: k, od: oi }, d, budget))
            .collect::<Result<Vec<_>, _>>()?;
        let mut flows = vec![0.0; net.level(k).edges.len()];
        for row in &rows {
            for (p, x) in &row.paths {
                for &e in p {
                    flows[e] += x;
                }
            }
        }
        if k + 1 < net.level_count() {
            demands = net
                .level(k + 1)
                .binding
                .iter()
                .map(|b| flows[b.expect("bound")])
                .collect();
        }
        levels.push(rows);
    }
    Ok(PathFlowTable { levels })
}

/// Result of [`gumbel_monte_carlo`].
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloChoice {
    /// Empirical choice frequency of each alternative.
    pub shares: Vec<f64>,
    /// Sample mean of `max_p {−g_p + ξ_p}`.
    pub mean_max: f64,
    /// Standard error of that mean.
    pub std_error_max: f64,
}

/// Uniform on the open interval (0, 1) from 53 random bits.
fn open_uniform(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Simulates `n_samples` users choosing `argmax_p {−g_p + ξ_p}` with iid
/// zero-mean Gumbel noise of scale `gamma`. Deterministic for a fixed seed.
pub fn gumbel_monte_carlo(
    costs: &[f64],
    gamma: f64,
    n_samples: usize,
    seed: u64,
) -> MonteCarloChoice {
    assert!(n_samples >= 1 && !costs.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; costs.len()];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n_samples {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for (p, &g) in costs.iter().enumerate() {
            let u = open_uniform(&mut rng);
            let xi = -gamma * ((-u.ln()).ln() + EULER_GAMMA);
            let utility = -g + xi;
            if utility > best {
                best = utility;
                arg = p;
            }
        }
        counts[arg] += 1;
        sum += best;
        sum_sq += best * best;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = if n_samples > 1 {
        (sum_sq - n * mean * mean) / (n - 1.0)
    } else {
        0.0
    };
    MonteCarloChoice {
        shares: counts.iter().map(|&c| c as f64 / n).collect(),
        mean_max: mean,
        std_error_max: (var.max(0.0) / n).sqrt(),
    }
}

/// Equilibrium found by [`fixed_point_small`].
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    /// Edge flows per level.
    pub flows: Vec<Vec<f64>>,
    pub times: DualPoint,
    pub iterations: usize,
}

pub const FIXED_POINT_MAX_ITERS: usize = 100_000;

/// Solves `t = τ(Θx(t))` by the damped iteration `t ← ½t + ½τ(f(t))`, with
/// `x(t)` the explicit logit distribution over enumerated paths.
pub fn fixed_point_small(net: &Network, tol: f64) -> Result<FixedPoint, OracleError> {
    let mut t = DualPoint::free_flow(net);
    let mut residual = f64::INFINITY;
    for it in 0..FIXED_POINT_MAX_ITERS {
        let table = logit_path_table(net, &t, 100)?;
        let flows = table.edge_flows(net);
        let target: Vec<f64> = net
            .plain_edges()
            .iter()
            .zip(net.plain_costs())
            .map(|(r, c)| {
                c.travel_time(flows[r.level][r.edge].max(0.0))
                    .expect("nonnegative flow")
            })
            .collect();
        residual =
            t.0.iter()
                .zip(&target)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
        if residual <= tol {
            return Ok(FixedPoint {
                flows,
                times: t,
                iterations: it,
            });
        }
        for (ti, &g) in t.0.iter_mut().zip(&target) {
            *ti = 0.5 * *ti + 0.5 * g;
        }
    }
    Err(OracleError::NoConvergence(FIXED_POINT_MAX_ITERS, residual))
}
