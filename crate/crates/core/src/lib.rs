//! Derrida-Retaux recursive systems: exact and floating laws of `X_n`,
//! laws as polynomials in `p`, free-energy brackets, the moment-generating
//! functional used near criticality, and finite-tree operators.

pub mod engine;
pub mod error;
pub mod kernel;
pub mod mgfdelta;
pub mod model;
pub mod observables;
pub mod polymode;
pub mod question5;
pub mod rational;
pub mod tree;

pub use engine::{Dist, EngineConfig, ExactDist, FloatDist, Mode, TailPolicy};
pub use error::{Error, Result};
pub use model::{
    classify, critical_p, mix_initial, Classification, CriticalP, ModelSpec, Prob, StarLaw,
};
