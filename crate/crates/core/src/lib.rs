pub mod distill;
pub mod error;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod phantom;
pub mod spectral;
pub mod tensor;
pub mod tomo;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{ComplexGrid, Grid};
