//! Numerical laboratory for weakly almost i.i.d. quantum sources.
//!
//! Logarithms are base 2 everywhere, so every entropy is in bits.

pub mod entropies;
pub mod error;
pub mod info;
pub mod io;
pub mod linalg;
pub mod manybody;
pub mod protocols;
pub mod rng;
pub mod sources;
pub mod state;
pub mod typicality;

pub use error::{Error, Result};
pub use linalg::{CMat, Side, C64};
pub use state::{Caps, DensityOperator, Observable, Payload, Povm, StateN};
