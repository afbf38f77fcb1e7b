pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod decoder;
pub mod dep;
pub mod encoder;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod pointer;
pub mod rst;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
