//! Heterogeneous decentralized data fusion over Gaussian factor graphs with
//! conservative filtering.
//!
//! Each robot holds a factor graph over its own subset of a global state,
//! fuses with neighbours through per-link channel filters, and, when it
//! marginalizes out past states, re-sparsifies and deflates its graph so that
//! the fused estimate stays conservative.

pub mod error;
pub mod filter;
pub mod fusion;
pub mod gaussian;
pub mod graph;
pub mod sim;
pub mod text;
pub mod verify;

pub use error::{Error, Result};
pub use gaussian::{CanonicalGaussian, Subject, Timestep, VarSet, VariableKey};
pub use graph::{FactorGraph, FactorId, FactorKind, FactorNode};
pub use filter::{CommonStructure, DynamicsModel, FilterStepReport, LinearDynamics};
pub use fusion::{ChannelFilter, FusionMessage};
