//! Two-branch transformer for dense multi-label temporal action detection.
//!
//! The library provides a small reverse-mode tensor engine, the relative
//! positional transformer block, the Assistant/Core network with its
//! copy-and-freeze training paradigm, asymmetric-loss training, binary
//! dataset formats with a synthetic generator, and per-frame evaluation
//! metrics. The `densedet` binary ties these together for scripted runs.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod gradsuite;
pub mod layers;
pub mod loss;
pub mod metrics;
pub mod net;
pub mod optim;
pub mod rpt;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Parameter, Real, Tensor};
