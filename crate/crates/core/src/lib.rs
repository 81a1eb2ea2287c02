//! Matrix-free Riemannian conjugate gradient for maximizing a smooth
//! objective `l(theta)`.
//!
//! The search runs on the graph manifold `{(theta, l(theta))}` equipped with
//! the warped ambient metric `diag(I, psi^2)`, where
//! `psi^2 = |grad l|^2 / (sigma^2 + |grad l|^2)`. Steps follow a cubic Taylor
//! approximation of the geodesic, and search directions are carried between
//! iterates by projecting the step displacement. All geometry is computed
//! in chart coordinates from values, gradients and a fixed number of
//! Hessian-vector products per iteration.
//!
//! ```
//! use warped_rcg::{problems::Squiggle, rcg, RcgConfig, WarpConfig};
//!
//! let p = Squiggle::new(2).unwrap();
//! let out = rcg::run(&p, WarpConfig::default(), vec![-10.0, 10.0], RcgConfig::default()).unwrap();
//! assert!(out.stop_reason().converged());
//! assert!((out.state.value() - p.max_value()).abs() < 1e-4);
//! ```

pub mod baseline;
pub mod error;
pub mod geometry;
pub mod line_search;
pub mod linalg;
pub mod objective;
pub mod oracle;
pub mod problems;
pub mod rcg;
pub mod retraction;

pub use baseline::{euclidean_cg_baseline, BaselineRun};
pub use error::{Error, Result};
pub use geometry::{
    geodesic_acceleration, taylor_coefficients, GeodesicAcceleration, GeodesicJet, GeometryCache, JetModel, PointEval,
    WarpConfig,
};
pub use line_search::{strong_wolfe, Sample, WolfeConfig};
pub use objective::{
    hvp_or_fallback, third_dir_contraction, Counting, EvalCounts, FdConfig, FnObjective, Negated, Objective,
};
pub use rcg::{dy_beta, IterationTrace, Rcg, RcgConfig, RcgRun, RcgState, StopReason};
pub use retraction::{curve_velocity, directional_value_and_slope, retract, vector_transport, TransportResult};
