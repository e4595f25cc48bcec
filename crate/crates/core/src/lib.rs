//! Sketch-and-project methods with adaptive sampling and heavy-ball momentum for
//! linear feasibility problems `Ax <= b`.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod io;
pub mod linalg;
pub mod loss;
pub mod model;
pub mod presets;
pub mod projection;
pub mod sampling;
pub mod solver;

pub use error::{Error, Result};
