pub mod autodiff;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod impact;
pub mod lora;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod train;
pub mod units;

pub use error::{Error, Result};
