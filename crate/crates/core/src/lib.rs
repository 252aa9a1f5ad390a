pub mod conditions;
pub mod dyadic;
pub mod error;
pub mod matops;
pub mod hilbert_avg;
pub mod operators;
pub mod seeds;
pub mod stopping;
pub mod weights;

pub use error::{Error, Result};
