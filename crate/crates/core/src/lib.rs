pub mod checkpoint;
pub mod data;
pub mod error;
pub mod fusion;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod network;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{Scalar, Shape, Tensor};
