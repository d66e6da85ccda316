//! Normal-cone differential inclusions ẋ ∈ f(x) − N_C(x) over uniformly prox-regular sets.

// Negated comparisons are deliberate: NaN inputs must fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod linalg;
pub mod lyapunov;
pub mod monotone;
pub mod observer;
pub mod sampling;

pub use error::{Error, Result};
pub mod solver;

pub use geometry::{ConeProjection, Point, ProxSet};
pub use solver::{IntegratorConfig, Trajectory, VectorField};
