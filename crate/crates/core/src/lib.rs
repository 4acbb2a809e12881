//! Rare-event reliability analysis by subset simulation, accelerated with
//! local Gaussian-process surrogates inside the Markov chains and partial
//! least squares dimension reduction in high dimensions.

pub mod correction;
pub mod design;
pub mod engine;
pub mod error;
pub mod exec;
pub mod lhs;
pub mod limit_state;
pub mod linalg;
pub mod local;
pub mod mcmc;
pub mod normal;
pub mod pls;
pub mod rng;
pub mod sample;
pub mod surrogate;

pub use error::{Error, Result};
