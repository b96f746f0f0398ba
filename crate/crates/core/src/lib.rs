//! Joint congestion control, routing and scheduling for multi-commodity
//! network utility maximization, solved slot by slot with a linearized ADMM.

// `!(v > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admm;
pub mod baselines;
pub mod capacity;
pub mod driver;
pub mod error;
pub mod network;
pub mod queue;
pub mod routing;
pub mod scheduling;
pub mod utility;

pub use error::{Error, Result};
