//! Adaptive accelerated composite gradient method and its application to the
//! equilibrium dual.
//!
//! The generic method minimizes `f(x) + Ψ(x)` with `f` smooth (accessed
//! through [`SmoothObjective`]) and `Ψ` separable with a cheap prox
//! ([`CompositeTerm`]). It needs no Lipschitz constant: each iteration halves
//! the previous estimate and doubles it until the quadratic upper bound holds
//! at the new point. The Bregman setup is Euclidean, so both the gradient and
//! the mirror steps are per-coordinate prox evaluations.
//!
//! [`solve`] runs the method on the equilibrium dual
//! `γ¹ψ¹(t/γ¹) + Σ σ*_e(t_e)`, averages the loadings computed along the way
//! with weights `α_i`, and certifies the result with a duality gap.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costs::LinkCost;
use crate::loading::{
    conjugate_sum, dual_smooth_value, network_loading, path_flows_from_load, primal_objective,
    primal_objective_path_free, DualPoint, LoadResult, LoadingError, PathFlowTable, PathSet,
};
use crate::model::{ModelError, Network};
use crate::oracle;

/// Additive slack of the descent test, relative to `1 + |f(x)|`.
pub const DESCENT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Initial Lipschitz estimate.
    #[serde(rename = "L0")]
    pub l0: f64,
    pub max_iters: usize,
    pub gap_tol: f64,
    pub max_backtracks_per_iter: usize,
    /// Reserved for randomized test harnesses; the method itself is deterministic.
    pub seed: u64,
    /// Largest number of enumerated per-level paths for which the certificate
    /// averages explicit path flows; above it the path-free primal is used.
    pub path_budget: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            l0: 1.0,
            max_iters: 1000,
            gap_tol: 1e-8,
            max_backtracks_per_iter: 60,
            seed: 0,
            path_budget: oracle::DEFAULT_PATH_BUDGET,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.l0.is_finite() && self.l0 > 0.0) {
            return Err(SolveError::InvalidConfig(format!(
                "L0 must be > 0, got {}",
                self.l0
            )));
        }
        if self.max_iters < 1 {
            return Err(SolveError::InvalidConfig("max_iters must be >= 1".into()));
        }
        if self.gap_tol.is_nan() || self.gap_tol < 0.0 {
            return Err(SolveError::InvalidConfig(format!(
                "gap_tol must be >= 0, got {}",
                self.gap_tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("start point is outside the conjugate domain or has the wrong length")]
    InvalidStart,
    #[error("iteration {iter}: descent test still failing after {backtracks} doublings (L = {l})")]
    BacktrackBudgetExceeded {
        iter: usize,
        backtracks: usize,
        l: f64,
    },
    #[error(transparent)]
    Loading(#[from] LoadingError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Smooth convex part `f` of a composite problem.
pub trait SmoothObjective {
    /// Extra data produced with each gradient (e.g. a network loading).
    type Info;

    fn value(&self, x: &[f64]) -> Result<f64, SolveError>;

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>, Self::Info), SolveError>;
}

/// Separable closed convex part `Ψ` with a per-coordinate prox.
pub trait CompositeTerm {
    fn value(&self, x: &[f64]) -> f64;

    /// `argmin_y { ‖y − v‖²/(2·step) + Ψ(y) }`.
    fn prox(&self, v: &[f64], step: f64) -> Vec<f64>;
}

/// `Ψ(t) = Σ_e σ*_e(t_e)`.
#[derive(Debug, Clone, Copy)]
pub struct ConjugateSum<'a>(pub &'a [LinkCost]);

impl CompositeTerm for ConjugateSum<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .map(|(c, &t)| c.conjugate_value(t))
            .sum()
    }

    fn prox(&self, v: &[f64], step: f64) -> Vec<f64> {
        self.0
            .iter()
            .zip(v)
            .map(|(c, &vi)| c.prox_conjugate(vi, step))
            .collect()
    }
}

/// Next `α` and mixing weight `τ = 1/(α·L_next)`:
/// `α_next = √(α²·L/L_next + 1/(4L_next²)) + 1/(2L_next)`.
pub fn alpha_step(alpha: f64, l: f64, l_next: f64) -> (f64, f64) {
    let a =
        (alpha * alpha * l / l_next + 1.0 / (4.0 * l_next * l_next)).sqrt() + 1.0 / (2.0 * l_next);
    // α·L_next ≥ 1 in exact arithmetic
    let tau = (1.0 / (a * l_next)).min(1.0);
    (a, tau)
}

/// Result of one gradient step.
#[derive(Debug, Clone, PartialEq)]
pub struct GradStep {
    pub y: Vec<f64>,
    /// Smooth value `f(y)`.
    pub fy: f64,
    pub accepted: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `Grad_L(x)`: the composite gradient step
/// `y = argmin { ⟨g, y − x⟩ + L/2‖y − x‖² + Ψ(y) }`, and the descent test
/// `f(y) ≤ f(x) + ⟨g, y − x⟩ + L/2‖y − x‖²` (with a small additive slack).
pub fn grad_map<S: SmoothObjective, C: CompositeTerm>(
    smooth: &S,
    composite: &C,
    x: &[f64],
    l: f64,
    grad: &[f64],
    fx: f64,
) -> Result<GradStep, SolveError> {
    let v: Vec<f64> = x.iter().zip(grad).map(|(xi, gi)| xi - gi / l).collect();
    let y = composite.prox(&v, 1.0 / l);
    let fy = smooth.value(&y)?;
    let diff: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
    let model = fx + dot(grad, &diff) + 0.5 * l * dot(&diff, &diff);
    let accepted = fy <= model + DESCENT_SLACK * (1.0 + fx.abs());
    Ok(GradStep { y, fy, accepted })
}

/// `Mirr_z^α(g)` with the Euclidean Bregman divergence: `prox(z − α·g, α)`.
pub fn mirror_map<C: CompositeTerm>(
    composite: &C,
    z: &[f64],
    grad: &[f64],
    alpha: f64,
) -> Vec<f64> {
    let v: Vec<f64> = z.iter().zip(grad).map(|(zi, gi)| zi - alpha * gi).collect();
    composite.prox(&v, alpha)
}

/// Iterates of the method after some number of accepted iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    /// Estimate sequence (returned point).
    pub y: Vec<f64>,
    /// Mirror sequence.
    pub z: Vec<f64>,
    /// Last extrapolation point (where the gradient was taken).
    pub x: Vec<f64>,
    pub alpha: f64,
    /// `A_k = α_k²·L_k = Σ_{i≤k} α_i`.
    pub a: f64,
    pub l: f64,
    pub iter: usize,
    /// Cumulative evaluations of `f` (a value or a value with gradient each).
    pub n_evals: usize,
}

/// One accepted iteration.
#[derive(Debug, Clone)]
pub struct Step<I> {
    pub iter: usize,
    pub l_used: f64,
    pub alpha: f64,
    pub tau: f64,
    /// `A` before and after the iteration.
    pub a_prev: f64,
    pub a: f64,
    pub backtracks: usize,
    /// Extrapolation point and the gradient data computed there.
    pub x: Vec<f64>,
    pub x_info: I,
    /// Smooth value at the new estimate `y`.
    pub fy: f64,
    pub n_evals: usize,
}

/// The adaptive accelerated method, advanced one iteration at a time.
pub struct AcceleratedMethod<'a, S, C> {
    smooth: &'a S,
    composite: &'a C,
    l0: f64,
    max_backtracks: usize,
    state: SolverState,
}

impl<'a, S: SmoothObjective, C: CompositeTerm> AcceleratedMethod<'a, S, C> {
    pub fn new(
        smooth: &'a S,
        composite: &'a C,
        x0: Vec<f64>,
        l0: f64,
        max_backtracks: usize,
    ) -> Self {
        AcceleratedMethod {
            smooth,
            composite,
            l0,
            max_backtracks,
            state: SolverState {
                y: x0.clone(),
                z: x0.clone(),
                x: x0,
                alpha: 0.0,
                a: 0.0,
                l: l0,
                iter: 0,
                n_evals: 0,
            },
        }
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn step(&mut self) -> Result<Step<S::Info>, SolveError> {
        let st = &self.state;
        let mut l = self.l0.max(st.l / 2.0);
        let mut backtracks = 0;
        let mut n_evals = st.n_evals;
        loop {
            let (alpha, tau) = alpha_step(st.alpha, st.l, l);
            let x: Vec<f64> =
                st.z.iter()
                    .zip(&st.y)
                    .map(|(&z, &y)| (tau * z + (1.0 - tau) * y).clamp(z.min(y), z.max(y)))
                    .collect();
            let (fx, grad, info) = self.smooth.value_and_gradient(&x)?;
            let g = grad_map(self.smooth, self.composite, &x, l, &grad, fx)?;
            n_evals += 2;
            if g.accepted {
                let z = mirror_map(self.composite, &st.z, &grad, alpha);
                let a_prev = st.a;
                let a = a_prev + alpha;
                let iter = st.iter + 1;
                self.state = SolverState {
                    y: g.y,
                    z,
                    x: x.clone(),
                    alpha,
                    a,
                    l,
                    iter,
                    n_evals,
                };
                return Ok(Step {
                    iter,
                    l_used: l,
                    alpha,
                    tau,
                    a_prev,
                    a,
                    backtracks,
                    x,
                    x_info: info,
                    fy: g.fy,
                    n_evals,
                });
            }
            if backtracks == self.max_backtracks {
                return Err(SolveError::BacktrackBudgetExceeded {
                    iter: st.iter + 1,
                    backtracks,
                    l,
                });
            }
            backtracks += 1;
            l *= 2.0;
        }
    }
}

/// The smooth dual part `γ¹ψ¹(t/γ¹)`; its gradient is minus the loaded flows.
pub struct EquilibriumObjective<'a> {
    net: &'a Network,
}

impl<'a> EquilibriumObjective<'a> {
    pub fn new(net: &'a Network) -> Self {
        EquilibriumObjective { net }
    }
}

impl SmoothObjective for EquilibriumObjective<'_> {
    type Info = LoadResult;

    fn value(&self, x: &[f64]) -> Result<f64, SolveError> {
        Ok(dual_smooth_value(self.net, &DualPoint(x.to_vec()))?)
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>, LoadResult), SolveError> {
        let load = network_loading(self.net, &DualPoint(x.to_vec()))?;
        Ok((load.psi1, load.gradient(self.net), load))
    }
}

/// Row of the iteration history.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub l_used: f64,
    pub n_func_evals: usize,
    /// Dual objective at the current estimate `y`.
    pub dual_value: f64,
    pub gap: Option<f64>,
    /// Seconds since the start of [`solve`].
    pub wall_time: f64,
}

/// Step-size bookkeeping of one iteration, kept for invariant checks.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub iter: usize,
    pub alpha: f64,
    pub tau: f64,
    pub l: f64,
    pub a_prev: f64,
    pub a: f64,
    /// `Σ α_i` accumulated by the primal averages.
    pub weight_sum: f64,
    pub backtracks: usize,
    /// Whether the extrapolation point lay in every conjugate domain.
    pub x_in_domain: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimalKind {
    /// `Ψ(x̄, f̄)` over averaged explicit path flows.
    PathTable,
    /// `Σσ(f̄) + Σ_k γ^k·(average level entropy)`: an upper bound on `Ψ(x̄, f̄)`
    /// by convexity, computable without paths.
    PathFree,
}

/// Duality gap at the current estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct GapCertificate {
    pub dual_value: f64,
    pub primal_value: f64,
    pub gap: f64,
    /// Iterations used.
    pub iterations: usize,
    pub primal_kind: PrimalKind,
}

/// `α`-weighted primal averages `(1/A_T)·Σ α_i (x^i, f^i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalAverage {
    pub weight_sum: f64,
    sum_flows: Vec<Vec<f64>>,
    sum_entropy: Vec<f64>,
    sum_paths: Option<PathFlowTable>,
}

impl PrimalAverage {
    pub fn new(net: &Network, paths: Option<&PathSet>) -> Self {
        PrimalAverage {
            weight_sum: 0.0,
            sum_flows: net
                .levels()
                .iter()
                .map(|l| vec![0.0; l.edges.len()])
                .collect(),
            sum_entropy: vec![0.0; net.level_count()],
            sum_paths: paths.map(PathFlowTable::zeros),
        }
    }

    pub fn add(&mut self, net: &Network, load: &LoadResult, paths: Option<&PathSet>, weight: f64) {
        self.weight_sum += weight;
        for (acc, lvl) in self.sum_flows.iter_mut().zip(&load.levels) {
            for (a, f) in acc.iter_mut().zip(&lvl.flows) {
                *a += weight * f;
            }
        }
        for (acc, lvl) in self.sum_entropy.iter_mut().zip(&load.levels) {
            *acc += weight * lvl.entropy;
        }
        if let (Some(acc), Some(ps)) = (self.sum_paths.as_mut(), paths) {
            acc.add_scaled(&path_flows_from_load(net, load, ps), weight);
        }
    }

    /// Averaged edge flows per level.
    pub fn flows(&self) -> Vec<Vec<f64>> {
        self.sum_flows
            .iter()
            .map(|l| l.iter().map(|f| f / self.weight_sum).collect())
            .collect()
    }

    pub fn entropies(&self) -> Vec<f64> {
        self.sum_entropy
            .iter()
            .map(|h| h / self.weight_sum)
            .collect()
    }

    pub fn paths(&self) -> Option<PathFlowTable> {
        self.sum_paths.as_ref().map(|p| {
            let mut p = p.clone();
            p.scale(1.0 / self.weight_sum);
            p
        })
    }
}

/// `dual_objective(y) + Ψ(x̄, f̄)`; uses explicit averaged path flows when
/// the average carries them, the path-free primal otherwise.
pub fn duality_gap(
    net: &Network,
    average: &PrimalAverage,
    y: &DualPoint,
    iterations: usize,
) -> Result<GapCertificate, SolveError> {
    let dual_value = dual_smooth_value(net, y)? + conjugate_sum(net, y)?;
    gap_from_dual(net, average, dual_value, iterations)
}

fn gap_from_dual(
    net: &Network,
    average: &PrimalAverage,
    dual_value: f64,
    iterations: usize,
) -> Result<GapCertificate, SolveError> {
    let flows = average.flows();
    let (primal_value, primal_kind) = match average.paths() {
        Some(x) => (primal_objective(net, &x, &flows)?, PrimalKind::PathTable),
        None => (
            primal_objective_path_free(net, &flows, &average.entropies())?,
            PrimalKind::PathFree,
        ),
    };
    Ok(GapCertificate {
        dual_value,
        primal_value,
        gap: dual_value + primal_value,
        iterations,
        primal_kind,
    })
}

/// `(1/min_k γ^k)·Σ_w d_w·l_w²` with `l_w` the longest expanded path.
pub fn lipschitz_bound_diagnostic(net: &Network) -> Result<f64, ModelError> {
    let lengths = net.longest_path_bounds()?;
    let s: f64 = net
        .top_demands()
        .iter()
        .zip(&lengths)
        .map(|(d, &l)| d * (l * l) as f64)
        .sum();
    Ok(s / net.min_gamma())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Gap fell to `gap_tol`.
    Converged,
    /// `max_iters` reached first.
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub status: SolveStatus,
    /// Final estimate `ỹ_T`.
    pub times: DualPoint,
    pub certificate: GapCertificate,
    /// Averaged edge flows `f̄` per level.
    pub flows: Vec<Vec<f64>>,
    /// Averaged path flows `x̄`, when paths were enumerated.
    pub path_flows: Option<PathFlowTable>,
    pub history: Vec<IterationRecord>,
    pub trace: Vec<StepTrace>,
    pub lipschitz_bound: f64,
    /// A-posteriori `max{½‖t⁰ − ỹ‖², ½‖τ(f̄) − ỹ‖²}` with `ỹ` standing in for `t*`.
    pub r2_estimate: f64,
}

/// Minimizes the equilibrium dual from `start` (free-flow times if `None`).
pub fn solve(
    net: &Network,
    cfg: &SolverConfig,
    start: Option<DualPoint>,
) -> Result<Solution, SolveError> {
    cfg.validate()?;
    let t0 = start.unwrap_or_else(|| DualPoint::free_flow(net));
    if !t0.in_domain(net) {
        return Err(SolveError::InvalidStart);
    }
    let clock = Instant::now();
    let paths = if net.levels().iter().all(|l| l.is_acyclic()) {
        oracle::enumerate_all(net, cfg.path_budget).ok()
    } else {
        None
    };
    let objective = EquilibriumObjective::new(net);
    let composite = ConjugateSum(net.plain_costs());
    let mut method = AcceleratedMethod::new(
        &objective,
        &composite,
        t0.0.clone(),
        cfg.l0,
        cfg.max_backtracks_per_iter,
    );
    let mut average = PrimalAverage::new(net, paths.as_ref());
    let mut history = Vec::new();
    let mut trace = Vec::new();
    let mut certificate = None;
    let mut status = SolveStatus::IterationLimit;

    for _ in 0..cfg.max_iters {
        let step = method.step()?;
        average.add(net, &step.x_info, paths.as_ref(), step.alpha);
        let y = &method.state().y;
        let dual_value = step.fy + composite.value(y);
        let cert = gap_from_dual(net, &average, dual_value, step.iter)?;
        trace.push(StepTrace {
            iter: step.iter,
            alpha: step.alpha,
            tau: step.tau,
            l: step.l_used,
            a_prev: step.a_prev,
            a: step.a,
            weight_sum: average.weight_sum,
            backtracks: step.backtracks,
            x_in_domain: DualPoint(step.x.clone()).in_domain(net),
        });
        history.push(IterationRecord {
            iter: step.iter,
            l_used: step.l_used,
            n_func_evals: step.n_evals,
            dual_value,
            gap: Some(cert.gap),
            wall_time: clock.elapsed().as_secs_f64(),
        });
        let done = cert.gap <= cfg.gap_tol;
        certificate = Some(cert);
        if done {
            status = SolveStatus::Converged;
            break;
        }
    }

    let times = DualPoint(method.state().y.clone());
    let flows = average.flows();
    let r2_estimate = {
        let start = 0.5 * dist_sq(&t0.0, &times.0);
        let implied: Vec<f64> = net
            .plain_edges()
            .iter()
            .zip(net.plain_costs())
            .map(|(r, c)| {
                c.travel_time(flows[r.level][r.edge].max(0.0))
                    .unwrap_or(f64::NAN)
            })
            .collect();
        start.max(0.5 * dist_sq(&implied, &times.0))
    };
    Ok(Solution {
        status,
        times,
        certificate: certificate.expect("max_iters >= 1"),
        flows,
        path_flows: average.paths(),
        history,
        trace,
        lipschitz_bound: lipschitz_bound_diagnostic(net)?,
        r2_estimate,
    })
}
