//! Gaussian continuous-variable cluster-state simulation in the covariance-matrix picture.

pub mod entanglement;
pub mod error;
pub mod golden;
pub mod homodyne;
pub mod oracle;
pub mod protocols;
pub mod qubrick;
pub mod state;
pub mod symplectic;

pub use error::{Error, Result};
pub use state::GaussianState;
pub use symplectic::SymplecticTransform;
