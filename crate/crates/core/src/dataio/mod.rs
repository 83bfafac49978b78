//! Binary tile and product formats, hash splits, buffered sampling and the
//! synthetic granule generator.

mod buffer;
pub(crate) mod bytes;
mod l2;
mod source;
mod split;
pub mod synth;
mod tile;

pub use buffer::*;
pub use l2::*;
pub use source::*;
pub use split::*;
pub use synth::{synth_generate, SynthConfig};
pub use tile::*;
