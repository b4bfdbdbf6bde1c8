//! Quantized approximation and Q-learning for average-cost Markov decision
//! processes on continuous state and action spaces.
//!
//! The pipeline: discretize a continuous model into a finite one
//! ([`quantization`]), solve the finite model's average cost optimality
//! equation exactly through two independent contraction routes
//! ([`finite_solver`]), learn the same solution model-free from samples
//! ([`q_sync`], [`q_async`]), bound the optimality gap a priori
//! ([`analysis`]), and measure it on the true model ([`evaluation`]).

pub mod analysis;
pub mod cli;
pub mod environments;
pub mod error;
pub mod evaluation;
pub mod finite_solver;
pub mod io;
pub mod mdp_core;
pub mod numerics;
pub mod q_async;
pub mod q_sync;
pub mod quantization;
pub mod rng;

pub use error::{Error, Result};
pub use mdp_core::{AcoeSolution, ContinuousModel, FiniteModel, Interval, StationaryPolicy};
pub use quantization::QuantizationScheme;
pub use rng::Rng;
