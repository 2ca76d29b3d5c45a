pub mod autograd;
pub mod cli;
pub mod data;
pub mod error;
pub mod gradsuite;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod parallel;
pub mod report;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
