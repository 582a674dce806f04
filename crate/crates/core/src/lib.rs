//! A baseline JPEG codec and a differentiable twin of the same pipeline.
//!
//! The differentiable path edits DCT coefficients with a sparse
//! multiplicative recurrent network and learns the quantization tables by
//! gradient descent. Learned tables and edited coefficients are written as
//! ordinary baseline JFIF files that any stock decoder can read.

pub mod autodiff;
pub mod cli;
pub mod codec;
pub mod edit;
pub mod losses;
pub mod metrics;
pub mod pipeline;
pub mod synth;
pub mod train;
