pub mod arch;
pub mod autodiff;
pub mod error;
pub mod fusion;
pub mod harness;
pub mod layers;
pub mod params;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision instantiations.
pub type Array = autodiff::Array<f64>;
pub type Tensor = autodiff::Tensor<f64>;
pub type ParamStore = params::ParamStore<f64>;
pub type Model = arch::Model<f64>;
pub type SeparatedNet = arch::SeparatedNet<f64>;
