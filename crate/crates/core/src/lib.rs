//! Double-cusp background, T²-symmetric perturbation evolution and the
//! energy, constraint and decay diagnostics built on top of it.

pub mod background;
pub mod constraints;
pub mod diagnostics;
pub mod energies;
pub mod error;
pub mod evolve;
pub mod grid;
pub mod jet;
pub mod profile;

pub use error::RunError;
