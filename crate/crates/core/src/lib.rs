//! Exact conditional independence for max-linear Bayesian networks.

pub mod context;
pub mod dist;
pub mod impact;
pub mod model_io;
pub mod network;
pub mod oracle;
pub mod rat;
pub mod representation;
pub mod separation;
pub mod trop;
pub mod zoo;
