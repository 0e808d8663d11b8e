mod fft;
pub mod operator;
pub(crate) mod rng;

pub use operator::{ForwardOperator, GridSpec};
