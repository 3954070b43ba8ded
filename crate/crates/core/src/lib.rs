//! Kuramoto network control under coupling uncertainty: synchronization
//! simulation, minimal control cost, MOCU estimation, a neural surrogate for
//! the synchronization check, and sequential experimental design.

pub mod control;
pub mod error;
pub mod io;
pub mod kuramoto;
pub mod mocu;
pub mod oed;
pub mod parallel;
pub mod stats;
pub mod surrogate;
pub mod uncertainty;

pub use error::{Error, Result};
