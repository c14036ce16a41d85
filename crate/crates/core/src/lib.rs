pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod integrator;
pub mod io;
pub mod netmodel;
pub mod scenarios;

pub use error::{Error, Result};
