//! Controlled-nondeterminism laboratory for paired network training.
//!
//! Labelled binary data is generated from a known linear or block-quadratic
//! log-odds model. Pairs of identically configured networks are trained on
//! the same example multiset under controlled randomness (initialization,
//! shuffling window, accumulation order). Each pair is scored by its excess
//! label loss against the truth and by the relative prediction difference
//! between its two members.
//!
//! The numerical code is generic over [`Scalar`] (`f64` by default, `f32`
//! for rounding studies); the aliases below name the common instantiations.

pub mod config;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nnet;
pub mod optim;
pub mod plot;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod stream;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Network64 = nnet::Network<f64>;
pub type Network32 = nnet::Network<f32>;
pub type GradientSet64 = nnet::GradientSet<f64>;
pub type GradientSet32 = nnet::GradientSet<f32>;
pub type OptimizerState64 = optim::OptimizerState<f64>;
pub type OptimizerState32 = optim::OptimizerState<f32>;
