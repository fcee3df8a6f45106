pub mod error;
pub mod fpe;
pub mod gan;
pub mod harness;
pub mod metrics;
pub mod sim;
pub mod tensor;

pub use error::{Error, Result};
