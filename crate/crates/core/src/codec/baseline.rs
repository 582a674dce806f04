use super::block::{assemble_blocks, partition_blocks, Channel, CoefficientGrid};
use super::color::{rgb_to_ycbcr, ycbcr_to_rgb};
use super::dct::{fdct_block, idct_block};
use super::image::{sample_to_byte, Plane, RgbImage, YcbcrImage};
use super::jfif::{entropy_decode, entropy_encode, DecodedStream, JfifBitstream};
use super::quant::{dequantize_block, quantize_block, QuantTablePair};
use super::CodecError;

/// Colour conversion, blocking and forward DCT: the unquantized
/// coefficients of Y, Cb and Cr.
pub fn forward_coefficients(img: &RgbImage) -> [CoefficientGrid<f64>; 3] {
    let ycc = rgb_to_ycbcr(img);
    let planes = ycc.planes();
    Channel::ALL.map(|c| {
        let plane = planes[c as usize];
        partition_blocks(plane, c).map(fdct_block)
    })
}

pub fn quantize_grids(coeffs: &[CoefficientGrid<f64>; 3], tables: &QuantTablePair) -> [CoefficientGrid<i32>; 3] {
    coeffs
        .each_ref()
        .map(|g| {
            let table = tables.for_luma(g.channel.is_luma());
            g.map(|b| quantize_block(b, table))
        })
}

pub fn encode_baseline(img: &RgbImage, tables: &QuantTablePair) -> Result<JfifBitstream, CodecError> {
    let quantized = quantize_grids(&forward_coefficients(img), tables);
    entropy_encode(&quantized, tables)
}

/// Dequantizes and inverse-transforms decoded coefficients to an RGB image.
/// Component samples are rounded to 8 bits before colour conversion, as in
/// stock decoders.
pub fn reconstruct(stream: &DecodedStream) -> RgbImage {
    let planes: Vec<Plane> = stream
        .grids
        .iter()
        .zip(&stream.component_tables)
        .map(|(grid, table)| {
            let mut plane = assemble_blocks(&grid.map(|b| idct_block(&dequantize_block(b, table))));
            plane.data.iter_mut().for_each(|v| *v = sample_to_byte(*v) as f64);
            plane
        })
        .collect();
    if planes.len() == 3 {
        let [y, cb, cr]: [Plane; 3] = planes.try_into().expect("three planes");
        ycbcr_to_rgb(&YcbcrImage { y, cb, cr })
    } else {
        let y = &planes[0];
        let data = y.data.iter().flat_map(|&v| [sample_to_byte(v); 3]).collect();
        RgbImage::new(y.width, y.height, data).expect("plane dimensions are valid")
    }
}

pub fn decode_baseline(bytes: &[u8]) -> Result<RgbImage, CodecError> {
    Ok(reconstruct(&entropy_decode(bytes)?))
}
