//! Dense arrays and seeded random streams shared by every other module.

mod grid;
mod rng;

pub use grid::{matmul, matmul_nt, matmul_tn, Grid};
pub use rng::RngStream;
