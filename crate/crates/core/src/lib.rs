//! Multi-agent traffic signal control with piecewise-linear function approximation.
//!
//! The crate is organised bottom-up:
//!
//! - [`pwlnet`]: dense layers, ReLU/BReLU activations, backpropagation and optimizers.
//! - [`ehh`]: efficient hinging-hyperplanes network with two-factor ANOVA importance.
//! - [`trafficsim`]: queue-based multi-intersection simulator with signal phase interlocks.
//! - [`env`]: per-intersection observations, rewards and the episode loop.
//! - [`marl`]: node embedding, influence aggregation, BReLU actor-critic and the training loop.
//! - [`baselines`]: fixed-time control, independent PPO and the difference-reward ablation.
//! - [`forecast`]: sliding-window traffic forecasting harness built on the EHH network.

pub mod baselines;
pub mod ehh;
pub mod env;
mod error;
pub mod forecast;
pub mod linalg;
pub mod marl;
pub mod pwlnet;
pub mod trafficsim;

pub use error::{Error, Result};
