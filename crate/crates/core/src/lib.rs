pub mod data;
pub mod nn;
pub mod scalar;
pub use scalar::Scalar;
