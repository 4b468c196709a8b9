//! Gradient descent and gradient flow for deep homogeneous models, with
//! meters for every layer-balance quantity these dynamics conserve.
//!
//! - [`homonet`]: dense and weight-shared homogeneous networks with exact
//!   backpropagation.
//! - [`balance`]: per-neuron, per-layer and Gram balance quantities and the
//!   pointwise identities that make them conserved under gradient flow.
//! - [`flow`]: gradient descent, RK4 and step-size schedules.
//! - [`mf`]: two-factor matrix factorization, its Hessian, the strict-saddle
//!   direction and the monitored diminishing-step solver.
//! - [`rank1`]: the scalar signal/complement dynamics of rank-1
//!   factorization.
//! - [`par`]: parallel or sequential execution of the data-parallel loops.

pub mod balance;
mod error;
pub mod flow;
pub mod homonet;
mod linalg;
pub mod mf;
pub mod par;
pub mod rank1;
pub mod rng;

pub use error::{Error, Result};
