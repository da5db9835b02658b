//! Tardos traitor tracing: static, dynamic, weakly dynamic and universal
//! schemes, with the constant optimizer, seeded code generation, pirate
//! coalition models and a Monte Carlo harness.

pub mod codegen;
pub mod dist;
pub mod error;
pub mod harness;
pub mod model;
pub mod optimize;
pub mod rng;
pub mod strategy;
pub mod trace;

pub use error::{Error, Result};
pub use model::{ProblemInstance, SchemeParameters, TuningConstants, UniversalLadder, Variant};
