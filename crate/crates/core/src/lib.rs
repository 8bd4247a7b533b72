//! Cumulative variation of time-dependent multifunctions and necessary
//! conditions for differential inclusions whose data vary with bounded
//! variation in time.

mod error;
pub mod calcvar;
pub mod conditions;
pub mod hamiltonian;
pub mod linalg;
pub mod multifun;
pub mod setvalued;
pub mod trajectory;
pub mod transcription;
pub mod variation;

pub use error::{Error, Result};
