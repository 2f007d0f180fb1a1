//! Stochastic tip-branching model of tumor-induced angiogenesis, its
//! ensemble statistics and the soliton/Lévy description of the vessel front.

pub mod config;
pub mod error;
pub mod levy;
pub mod model;
pub mod optim;
pub mod soliton;
pub mod stats;
pub mod taf;
pub mod tips;

pub use error::{Error, Result};
pub use model::{
    branching_rate, chemotactic_force, regularized_delta, DeltaKernel, GridSpec, ModelParams, Tip,
    Vec2,
};
pub use taf::{init_taf, step_taf_hybrid, step_taf_meanfield, Boundary, InitialProfile, TafField};
