//! Variational recurrent state-space model for probabilistic forecasting.
//!
//! The crate is `no_std` (with `alloc`) and holds everything that is pure
//! computation: a small reverse-mode differentiation substrate, recurrent and
//! feed-forward blocks, the latent-variable sequence model with its
//! evidence-lower-bound objective and Monte-Carlo forecaster, the training
//! loop, data transforms, and the quantile/coverage metrics. File formats
//! and the command line live in the `vrnnaug` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod math;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result, TensorError};
pub use tensor::{Graph, Tensor, Var};
