//! Stochastic user equilibrium in hierarchical congestion games.
//!
//! The equilibrium is found by minimizing the convex dual
//! `γ¹ψ¹(t/γ¹) + Σ_e σ*_e(t_e)` over edge times `t` with an adaptive
//! accelerated composite gradient method. Primal flows are recovered by
//! weighted averaging of the loadings along the way, and every answer comes
//! with a computable duality gap.
//!
//! * [`costs`]: link-cost families, their integrals, conjugates and prox maps.
//! * [`model`]: the multi-level network and its validation.
//! * [`loading`]: soft-min potentials, network loading, primal/dual objectives.
//! * [`solver`]: the accelerated method, averaging and gap certificates.
//! * [`oracle`]: brute-force reference implementations for testing.
//! * [`cli`]: file formats and the commands behind the `hsue` binary.

pub mod cli;
pub mod costs;
pub mod loading;
pub mod model;
pub mod oracle;
pub mod solver;

pub use costs::{CostError, DualDomain, LinkCost};
pub use loading::{DualPoint, LoadResult, LoadingError, PathFlowTable};
pub use model::{
    Edge, EdgeKind, LevelGraph, ModelError, Network, NetworkHierarchy, OdPair, OdRef, Violation,
};
