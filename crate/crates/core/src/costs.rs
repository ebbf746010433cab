//! Link-cost families and their convex-analytic companions.
//!
//! Every plain edge carries a non-decreasing travel-time function `τ(f)`.
//! The dual problem never sees `τ` directly; it works with
//!
//! * `σ(f) = ∫₀^f τ(z) dz`, the cost integral,
//! * `σ*(t) = sup_{f ≥ 0} { f·t − σ(f) }`, its convex conjugate,
//! * `σ*'(t)`, which is the inverse cost map (`t = τ(f) ⟺ f = σ*'(t)`),
//! * the one-dimensional proximal map of `σ*`, used by the composite steps.
//!
//! The supremum is taken over nonnegative flows, so `σ*` vanishes identically
//! below the free-flow time `τ(0)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance of the bisection used by [`LinkCost::prox_conjugate`].
pub const PROX_TOLERANCE: f64 = 1e-12;
/// Iteration cap of the same bisection.
pub const PROX_MAX_ITERS: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostError {
    #[error("flow must be nonnegative, got {0}")]
    NegativeFlow(f64),
    #[error("time {t} lies outside the conjugate domain (upper bound {upper})")]
    OutsideDomain { t: f64, upper: f64 },
    #[error("invalid cost parameter: {0}")]
    InvalidParameter(String),
}

/// A parametric non-decreasing travel-time function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum LinkCost {
    /// `τ(f) = t0`.
    Constant { t0: f64 },
    /// `τ(f) = a + b·f`.
    Affine { a: f64, b: f64 },
    /// BPR-style `τ(f) = t0·(1 + beta·(f/cap)^mu)`.
    Power {
        t0: f64,
        beta: f64,
        cap: f64,
        mu: f64,
    },
}

/// Effective domain of `σ*`: `[lower, upper]` where `lower = τ(0)`.
///
/// Below `lower` the conjugate is identically zero, so the domain really
/// extends to `−∞`; `lower` marks where `σ*` starts to grow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualDomain {
    pub lower: f64,
    pub upper: f64,
}

impl DualDomain {
    pub fn contains(&self, t: f64) -> bool {
        t <= self.upper && !t.is_nan()
    }
}

impl LinkCost {
    pub fn constant(t0: f64) -> Result<Self, CostError> {
        let c = LinkCost::Constant { t0 };
        c.check()?;
        Ok(c)
    }

    pub fn affine(a: f64, b: f64) -> Result<Self, CostError> {
        let c = LinkCost::Affine { a, b };
        c.check()?;
        Ok(c)
    }

    pub fn power(t0: f64, beta: f64, cap: f64, mu: f64) -> Result<Self, CostError> {
        let c = LinkCost::Power { t0, beta, cap, mu };
        c.check()?;
        Ok(c)
    }

    /// Checks the parameter sign constraints that make `τ` non-decreasing.
    pub fn check(&self) -> Result<(), CostError> {
        let bad = |msg: String| Err(CostError::InvalidParameter(msg));
        match *self {
            LinkCost::Constant { t0 } => {
                if !(t0.is_finite() && t0 > 0.0) {
                    return bad(format!("constant: t0 must be finite and > 0, got {t0}"));
                }
            }
            LinkCost::Affine { a, b } => {
                if !(a.is_finite() && a >= 0.0) {
                    return bad(format!("affine: a must be finite and >= 0, got {a}"));
                }
                if !(b.is_finite() && b > 0.0) {
                    return bad(format!("affine: b must be finite and > 0, got {b}"));
                }
            }
            LinkCost::Power { t0, beta, cap, mu } => {
                if !(t0.is_finite() && t0 > 0.0) {
                    return bad(format!("power: t0 must be finite and > 0, got {t0}"));
                }
                if !(beta.is_finite() && beta > 0.0) {
                    return bad(format!("power: beta must be finite and > 0, got {beta}"));
                }
                if !(cap.is_finite() && cap > 0.0) {
                    return bad(format!("power: cap must be finite and > 0, got {cap}"));
                }
                if !(mu.is_finite() && mu >= 1.0) {
                    return bad(format!("power: mu must be finite and >= 1, got {mu}"));
                }
            }
        }
        Ok(())
    }

    /// Free-flow time `τ(0)`.
    pub fn free_flow_time(&self) -> f64 {
        match *self {
            LinkCost::Constant { t0 } => t0,
            LinkCost::Affine { a, .. } => a,
            LinkCost::Power { t0, .. } => t0,
        }
    }

    pub fn domain(&self) -> DualDomain {
        let lower = self.free_flow_time();
        let upper = match self {
            LinkCost::Constant { t0 } => *t0,
            _ => f64::INFINITY,
        };
        DualDomain { lower, upper }
    }

    /// `τ(f)`.
    pub fn travel_time(&self, f: f64) -> Result<f64, CostError> {
        check_flow(f)?;
        Ok(match *self {
            LinkCost::Constant { t0 } => t0,
            LinkCost::Affine { a, b } => a + b * f,
            LinkCost::Power { t0, beta, cap, mu } => t0 * (1.0 + beta * (f / cap).powf(mu)),
        })
    }

    /// `σ(f) = ∫₀^f τ(z) dz`.
    pub fn cost_integral(&self, f: f64) -> Result<f64, CostError> {
        check_flow(f)?;
        Ok(match *self {
            LinkCost::Constant { t0 } => t0 * f,
            LinkCost::Affine { a, b } => a * f + 0.5 * b * f * f,
            LinkCost::Power { t0, beta, cap, mu } => {
                t0 * f + t0 * beta * cap / (mu + 1.0) * (f / cap).powf(mu + 1.0)
            }
        })
    }

    /// `σ*(t)`; `+∞` outside the domain.
    pub fn conjugate_value(&self, t: f64) -> f64 {
        let lower = self.free_flow_time();
        if t <= lower {
            return 0.0;
        }
        match *self {
            LinkCost::Constant { .. } => f64::INFINITY,
            LinkCost::Affine { a, b } => (t - a) * (t - a) / (2.0 * b),
            LinkCost::Power { t0, mu, .. } => {
                // at the maximizer f, f·t − σ(f) collapses to mu/(mu+1)·f·(t − t0)
                let f = self.inverse_time(t);
                mu / (mu + 1.0) * f * (t - t0)
            }
        }
    }

    /// `σ*'(t)`: the flow `f ≥ 0` with `τ(f) = t`, or 0 at and below free flow.
    pub fn conjugate_derivative(&self, t: f64) -> Result<f64, CostError> {
        let dom = self.domain();
        if t.is_nan() || t > dom.upper {
            return Err(CostError::OutsideDomain {
                t,
                upper: dom.upper,
            });
        }
        if t <= dom.lower {
            return Ok(0.0);
        }
        Ok(self.inverse_time(t))
    }

    // caller guarantees free_flow < t < upper
    fn inverse_time(&self, t: f64) -> f64 {
        match *self {
            LinkCost::Constant { .. } => 0.0,
            LinkCost::Affine { a, b } => (t - a) / b,
            LinkCost::Power { t0, beta, cap, mu } => cap * ((t / t0 - 1.0) / beta).powf(1.0 / mu),
        }
    }

    /// `argmin_t { (t − v)²/(2·step) + σ*(t) }`.
    ///
    /// Below free flow `σ*` is zero and the prox is the identity. Above it the
    /// stationarity condition `t − v + step·σ*'(t) = 0` is solved in the flow
    /// variable: with `t = τ(f)` it reads `τ(f) + step·f = v`, which is strictly
    /// increasing in `f` and well conditioned even where `σ*'` has infinite
    /// slope at free flow.
    pub fn prox_conjugate(&self, v: f64, step: f64) -> f64 {
        debug_assert!(step > 0.0);
        let lower = self.free_flow_time();
        if v <= lower {
            return v;
        }
        match *self {
            LinkCost::Constant { t0 } => t0,
            LinkCost::Affine { a, b } => (v * b + step * a) / (b + step),
            LinkCost::Power { .. } => {
                let residual = |f: f64| self.power_time(f) + step * f - v;
                let mut lo = 0.0;
                let mut hi = (v - lower) / step;
                for _ in 0..PROX_MAX_ITERS {
                    if hi - lo <= PROX_TOLERANCE {
                        break;
                    }
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if residual(mid) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let f = 0.5 * (lo + hi);
                self.power_time(f).clamp(lower, v)
            }
        }
    }

    fn power_time(&self, f: f64) -> f64 {
        match *self {
            LinkCost::Power { t0, beta, cap, mu } => t0 * (1.0 + beta * (f / cap).powf(mu)),
            _ => unreachable!("power_time on a non-power cost"),
        }
    }

    /// Whether `τ` is strictly increasing (so `σ*'` is a genuine inverse).
    pub fn is_strictly_increasing(&self) -> bool {
        !matches!(self, LinkCost::Constant { .. })
    }
}

fn check_flow(f: f64) -> Result<(), CostError> {
    if f < 0.0 || f.is_nan() {
        Err(CostError::NegativeFlow(f))
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bpr() -> LinkCost {
        LinkCost::power(1.0, 0.15, 2.0, 4.0).unwrap()
    }

    fn families() -> Vec<LinkCost> {
        vec![
            LinkCost::constant(3.0).unwrap(),
            LinkCost::affine(1.0, 1.0).unwrap(),
            LinkCost::affine(0.0, 0.5).unwrap(),
            bpr(),
            LinkCost::power(2.0, 0.5, 1.0, 1.0).unwrap(),
        ]
    }

    // golden-section maximization of f·t − σ(f) over f ∈ [0, hi]
    fn conjugate_by_search(c: &LinkCost, t: f64, hi: f64) -> f64 {
        let obj = |f: f64| f * t - c.cost_integral(f).unwrap();
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (0.0, hi);
        for _ in 0..300 {
            let x1 = b - g * (b - a);
            let x2 = a + g * (b - a);
            if obj(x1) < obj(x2) {
                a = x1;
            } else {
                b = x2;
            }
        }
        obj(0.5 * (a + b))
    }

    // bisection in t on t − v + step·σ*'(t)
    fn prox_by_bisection(c: &LinkCost, v: f64, step: f64) -> f64 {
        let h = |t: f64| t - v + step * c.conjugate_derivative(t).unwrap();
        let (mut lo, mut hi) = (c.free_flow_time(), v);
        while hi - lo > 1e-13 {
            let mid = 0.5 * (lo + hi);
            if h(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn travel_time_examples() {
        assert_eq!(
            LinkCost::affine(1.0, 1.0)
                .unwrap()
                .travel_time(0.0)
                .unwrap(),
            1.0
        );
        assert!((bpr().travel_time(2.0).unwrap() - 1.15).abs() < 1e-15);
        assert_eq!(
            LinkCost::constant(3.0).unwrap().travel_time(7.0).unwrap(),
            3.0
        );
    }

    #[test]
    fn negative_flow_rejected() {
        let c = LinkCost::affine(1.0, 1.0).unwrap();
        assert_eq!(c.travel_time(-1.0), Err(CostError::NegativeFlow(-1.0)));
        assert_eq!(c.cost_integral(-0.5), Err(CostError::NegativeFlow(-0.5)));
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(LinkCost::constant(0.0).is_err());
        assert!(LinkCost::affine(-1.0, 1.0).is_err());
        assert!(LinkCost::affine(1.0, 0.0).is_err());
        assert!(LinkCost::power(1.0, 0.15, 2.0, 0.5).is_err());
        assert!(LinkCost::power(1.0, 0.15, 0.0, 4.0).is_err());
    }

    #[test]
    fn cost_integral_examples() {
        assert_eq!(
            LinkCost::affine(1.0, 1.0)
                .unwrap()
                .cost_integral(2.0)
                .unwrap(),
            4.0
        );
        assert_eq!(
            LinkCost::constant(3.0).unwrap().cost_integral(2.0).unwrap(),
            6.0
        );
        // t0·f + t0·beta·cap/(mu+1)·(f/cap)^(mu+1) = 2 + 0.15·2/5
        assert!((bpr().cost_integral(2.0).unwrap() - 2.06).abs() < 1e-14);
    }

    #[test]
    fn conjugate_value_examples() {
        assert_eq!(
            LinkCost::affine(1.0, 1.0).unwrap().conjugate_value(3.0),
            2.0
        );
        for c in families() {
            assert_eq!(c.conjugate_value(c.free_flow_time()), 0.0);
        }
        let by_search = conjugate_by_search(&bpr(), 1.15, 10.0);
        assert!((bpr().conjugate_value(1.15) - by_search).abs() < 1e-12);
        // maximizer f = 2: 2·1.15 − 2.06
        assert!((bpr().conjugate_value(1.15) - 0.24).abs() < 1e-14);
    }

    #[test]
    fn constant_conjugate_is_indicator() {
        let c = LinkCost::constant(3.0).unwrap();
        assert_eq!(c.conjugate_value(2.0), 0.0);
        assert_eq!(c.conjugate_value(3.5), f64::INFINITY);
        assert!(matches!(
            c.conjugate_derivative(3.5),
            Err(CostError::OutsideDomain { .. })
        ));
        assert_eq!(c.conjugate_derivative(3.0).unwrap(), 0.0);
    }

    #[test]
    fn conjugate_derivative_examples() {
        assert_eq!(
            LinkCost::affine(1.0, 1.0)
                .unwrap()
                .conjugate_derivative(3.0)
                .unwrap(),
            2.0
        );
        assert!((bpr().conjugate_derivative(1.15).unwrap() - 2.0).abs() < 1e-12);
        for c in families() {
            assert_eq!(c.conjugate_derivative(c.free_flow_time()).unwrap(), 0.0);
        }
    }

    #[test]
    fn prox_examples() {
        let aff = LinkCost::affine(1.0, 1.0).unwrap();
        assert_eq!(aff.prox_conjugate(3.0, 1.0), 2.0);
        for c in families() {
            let v = c.free_flow_time() - 0.7;
            assert_eq!(c.prox_conjugate(v, 0.3), v);
        }
        let oracle = prox_by_bisection(&bpr(), 1.3, 0.5);
        assert!((bpr().prox_conjugate(1.3, 0.5) - oracle).abs() < 1e-10);
        assert_eq!(
            LinkCost::constant(3.0).unwrap().prox_conjugate(5.0, 2.0),
            3.0
        );
    }

    #[test]
    fn serde_tagged_format() {
        let c: LinkCost = serde_json::from_str(r#"{"type":"affine","a":1,"b":2}"#).unwrap();
        assert_eq!(c, LinkCost::Affine { a: 1.0, b: 2.0 });
        assert!(serde_json::from_str::<LinkCost>(r#"{"type":"quartic","a":1}"#).is_err());
        assert!(serde_json::from_str::<LinkCost>(r#"{"type":"constant","t0":1,"x":2}"#).is_err());
    }

    fn any_family() -> impl Strategy<Value = LinkCost> {
        prop_oneof![
            (0.1f64..5.0).prop_map(|t0| LinkCost::Constant { t0 }),
            (0.0f64..5.0, 0.1f64..5.0).prop_map(|(a, b)| LinkCost::Affine { a, b }),
            (0.1f64..5.0, 0.05f64..2.0, 0.5f64..5.0, 1.0f64..5.0)
                .prop_map(|(t0, beta, cap, mu)| LinkCost::Power { t0, beta, cap, mu }),
        ]
    }

    proptest! {
        #[test]
        fn fenchel_young(c in any_family(), f in 0.0f64..10.0, dt in -3.0f64..6.0) {
            let t = c.free_flow_time() + dt;
            prop_assume!(c.domain().contains(t));
            let lhs = c.cost_integral(f).unwrap() + c.conjugate_value(t);
            prop_assert!(lhs >= f * t - 1e-9 * (1.0 + (f * t).abs()));
            // equality at t = τ(f)
            let tf = c.travel_time(f).unwrap();
            if c.domain().contains(tf) {
                let eq = c.cost_integral(f).unwrap() + c.conjugate_value(tf) - f * tf;
                // constant costs hit the kink at t0 where any f ≥ 0 is a maximizer
                prop_assert!(eq.abs() <= 1e-9 * (1.0 + (f * tf).abs()));
            }
        }

        #[test]
        fn inverse_cost_map(c in any_family(), rel in 0.05f64..10.0) {
            prop_assume!(c.is_strictly_increasing());
            let f = match c { LinkCost::Power { cap, .. } => rel * cap, _ => rel };
            let back = c.conjugate_derivative(c.travel_time(f).unwrap()).unwrap();
            prop_assert!((back - f).abs() <= 1e-10 * (1.0 + f));
        }

        #[test]
        fn prox_stationarity(c in any_family(), dv in -3.0f64..8.0, step in 0.01f64..20.0) {
            let v = c.free_flow_time() + dv;
            let t = c.prox_conjugate(v, step);
            prop_assert!(c.domain().contains(t));
            if let LinkCost::Constant { t0 } = c {
                // subgradient containment at the domain boundary
                if v > t0 {
                    prop_assert_eq!(t, t0);
                } else {
                    prop_assert_eq!(t, v);
                }
            } else {
                let f = c.conjugate_derivative(t).unwrap();
                let r = t - v + step * f;
                // recovering f from t near free flow loses digits: allow the
                // residual a few ulps of t amplified by step·σ*''(t) = step/τ'(f)
                let slope = match c {
                    LinkCost::Power { t0, beta, cap, mu } if f > 0.0 => {
                        t0 * beta * mu * (f / cap).powf(mu - 1.0) / cap
                    }
                    LinkCost::Affine { b, .. } => b,
                    _ => f64::INFINITY,
                };
                let conditioning = step / slope * 8.0 * f64::EPSILON * t.abs();
                prop_assert!(r.abs() <= 1e-10 * (1.0 + v.abs()) + conditioning, "residual {}", r);
            }
        }

        #[test]
        fn conjugate_finite_difference(c in any_family(), dt in 0.05f64..5.0) {
            prop_assume!(c.is_strictly_increasing());
            let t = c.free_flow_time() + dt;
            let h = 1e-5;
            let fd = (c.conjugate_value(t + h) - c.conjugate_value(t - h)) / (2.0 * h);
            let d = c.conjugate_derivative(t).unwrap();
            prop_assert!((fd - d).abs() <= 1e-5 * (1.0 + d.abs()), "fd {} vs {}", fd, d);
        }
    }
}
