//! Analysis and solution of singular nonlinear systems through p-regularity.
//!
//! The crate is organised bottom-up:
//!
//! * [`expr`] parses polynomial systems and differentiates them exactly.
//! * [`linalg`] provides the rank-revealing primitives (images, kernels,
//!   orthoprojectors, right-inverse norms, least squares).
//! * [`mapping`] bundles a system with memoised derivative tensors.
//! * [`pfactor`] builds the subspace decomposition `Y_1 (+) .. (+) Y_p`, the
//!   p-factor operator, regularity tests, the `H_p` cone sampler and the
//!   projector chain used by the Newton scheme.
//! * [`solvers`] runs classical and p-factor Newton iterations.
//! * [`optimality`] certifies degenerate equality-constrained minimisers.
//! * [`conlag`] handles inequality constraints with weakly active
//!   constraints through the modified Lagrangian system.
//! * [`tangent`] checks tangent-cone descriptions against traced solution
//!   curves and fits distance estimates.

pub mod conlag;
pub mod error;
pub mod expr;
pub mod linalg;
pub mod mapping;
pub mod optimality;
pub mod pfactor;
pub mod sampling;
pub mod solvers;
pub mod tangent;

pub use error::{Error, Result};
pub use mapping::MappingModel;
