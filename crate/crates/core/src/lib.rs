pub mod checkpoint;
pub mod data;
pub mod ddpm;
pub mod error;
pub mod harness;
pub mod ndtensor;
pub mod nn;
pub mod pyramid;
pub mod quantize;
pub mod refinery;

pub use error::{Error, ParseError, Result};
pub use ndtensor::{Grid, RngStream};
