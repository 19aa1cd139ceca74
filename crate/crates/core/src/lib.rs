pub mod error;
pub mod state;
pub mod tolerances;

pub use error::{Error, Result};
pub mod hull;
pub mod waves;
pub mod grid;
pub mod subsolutions;
pub mod weak;
pub mod driver;
