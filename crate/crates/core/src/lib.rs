//! Numerical laboratory for weighted Bergman kernels and Demailly approximation
//! of plurisubharmonic envelopes on the disk and the bidisk.

pub mod bergman;
pub mod checks;
pub mod cli;
pub mod demailly;
pub mod domains;
pub mod envelope;
pub mod error;
pub mod field;
pub mod quadrature;
pub mod weights;

pub use error::{Error, Result};
