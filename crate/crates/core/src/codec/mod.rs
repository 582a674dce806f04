//! Baseline JPEG: colour transform, blocking, DCT, quantization, Huffman
//! entropy coding and the JFIF container.

mod baseline;
pub mod block;
pub mod color;
pub mod dct;
mod error;
pub mod huffman;
mod image;
pub mod jfif;
pub mod ppm;
pub mod quant;

pub use baseline::{decode_baseline, encode_baseline, forward_coefficients, quantize_grids, reconstruct};
pub use block::{assemble_blocks, partition_blocks, Channel, CoefficientGrid};
pub use color::{rgb_to_ycbcr, ycbcr_to_rgb};
pub use dct::{fdct_block, idct_block};
pub use error::{CodecError, Unsupported};
pub use image::{sample_to_byte, Plane, RgbImage, YcbcrImage};
pub use jfif::{entropy_decode, entropy_encode, validate_markers, DecodedStream, JfifBitstream};
pub use ppm::{decode_ppm, encode_ppm};
pub use quant::{dequantize_block, quantize_block, QuantTable, QuantTablePair};
