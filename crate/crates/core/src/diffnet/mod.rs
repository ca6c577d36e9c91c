//! Small dense feed-forward networks with hand-written backpropagation.
//!
//! Everything is `f64` and single-threaded per parameter store.

mod adam;
pub mod checkpoint;
mod ema;
pub mod gradcheck;
mod mlp;
mod params;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use ema::Ema;
pub use gradcheck::{finite_difference_grad, max_relative_error, mlp_finite_difference_grad};
pub use mlp::{Activation, ForwardCache, Mlp, MlpSpec, OutputActivation, LEAKY_SLOPE};
pub use params::{clip_grad_norm, Param, ParamStore};
pub use tensor::Tensor;

