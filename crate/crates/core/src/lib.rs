pub mod error;
pub mod exec;
pub mod fluctuations;
pub mod gaussian_info;
pub mod io;
pub mod meanfield;
pub mod model;
pub mod ode;
pub mod oracle;
pub mod phasescan;
pub mod thermo;

pub use error::{Error, Result};
