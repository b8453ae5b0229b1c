pub mod error;
pub mod fields;
pub mod lowerbound;
pub mod numerics;
pub mod reference;
pub mod solver;
pub mod validation;

pub use error::{Error, Result};

/// `f64` vector; the precision every solver entry point runs in.
pub type Vector = numerics::Vector<f64>;
/// `f64` square matrix.
pub type Matrix = numerics::Matrix<f64>;
