//! Pointwise verification engine for curvature and structure identities on
//! coordinate charts.
//!
//! Metrics, structure tensors and potential functions are written in a small
//! expression language, evaluated to truncated Taylor jets at sampled
//! points, and pushed through the standard machinery of semi-Riemannian
//! geometry (connection, curvature, derivative operators). On top of that
//! sit residual checkers for almost contact metric structures, gradient and
//! quasi-Einstein soliton equations, and Lorentzian perfect-fluid identities.
//!
//! Entry points:
//!
//! * [`models::catalog`] and [`models::load_model`] produce a [`models::ModelSpec`];
//! * [`suite`] binds a model and runs the selected check suites;
//! * [`report`] holds the uniform check-report structure and JSON output.

pub mod contact;
pub mod expr;
pub mod geometry;
pub mod jet;
pub mod report;
pub mod tensor;
