//! REM-type spin glasses: the Gibbs and Parisi variational principles, Poisson
//! point processes and their Poisson-Dirichlet normalizations, and finite-size
//! Monte Carlo of the pure REM and of the REM with an extensive cavity field.

pub mod cavity;
pub mod error;
pub mod model;
pub mod parisi;
pub mod quadrature;
pub mod rem;
pub mod rng;
pub mod ruelle;
pub mod stats;
pub mod tilt;

pub use error::{Error, Result};
pub use model::PhiModel;
pub use quadrature::QuadratureRule;
