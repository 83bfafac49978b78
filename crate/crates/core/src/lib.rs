pub mod codec;
pub mod dataio;
pub mod error;
pub mod normalize;
pub mod probes;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod vae;

pub use error::{Error, Result};
