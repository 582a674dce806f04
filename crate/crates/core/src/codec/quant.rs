use super::CodecError;

/// Annex K luminance table, natural (row-major) order.
pub const ANNEX_K_LUMA: [u8; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Annex K chrominance table, natural (row-major) order.
pub const ANNEX_K_CHROMA: [u8; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, //
    18, 21, 26, 66, 99, 99, 99, 99, //
    24, 26, 56, 99, 99, 99, 99, 99, //
    47, 66, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99,
];

/// An 8×8 quantization table with entries in [1, 255], natural order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantTable([u8; 64]);

impl QuantTable {
    pub fn new(values: [u8; 64]) -> Result<Self, CodecError> {
        if let Some(index) = values.iter().position(|&v| v == 0) {
            return Err(CodecError::InvalidQuantTable { index, value: 0 });
        }
        Ok(Self(values))
    }

    pub fn from_slice(values: &[i64]) -> Result<Self, CodecError> {
        if values.len() != 64 {
            return Err(CodecError::InvalidQuantTable { index: values.len(), value: -1 });
        }
        let mut out = [0u8; 64];
        for (index, (&v, o)) in values.iter().zip(out.iter_mut()).enumerate() {
            if !(1..=255).contains(&v) {
                return Err(CodecError::InvalidQuantTable { index, value: v });
            }
            *o = v as u8;
        }
        Ok(Self(out))
    }

    pub fn ones() -> Self {
        Self([1; 64])
    }

    pub fn values(&self) -> &[u8; 64] {
        &self.0
    }

    pub fn get(&self, i: usize) -> u8 {
        self.0[i]
    }

    /// Scales `base` with the libjpeg quality convention.
    pub fn scaled(base: &[u8; 64], quality: u8) -> Result<Self, CodecError> {
        if !(1..=100).contains(&quality) {
            return Err(CodecError::InvalidQuality(quality as i64));
        }
        let q = quality as i64;
        let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
        let mut out = [0u8; 64];
        for (o, &b) in out.iter_mut().zip(base) {
            // integer (b·scale + 50) / 100 is round-half-up of b·scale/100
            *o = ((b as i64 * scale + 50) / 100).clamp(1, 255) as u8;
        }
        Ok(Self(out))
    }
}

/// Luminance and chrominance tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantTablePair {
    pub luma: QuantTable,
    pub chroma: QuantTable,
}

impl QuantTablePair {
    pub fn annex_k() -> Self {
        Self {
            luma: QuantTable(ANNEX_K_LUMA),
            chroma: QuantTable(ANNEX_K_CHROMA),
        }
    }

    pub fn for_quality(quality: u8) -> Result<Self, CodecError> {
        Ok(Self {
            luma: QuantTable::scaled(&ANNEX_K_LUMA, quality)?,
            chroma: QuantTable::scaled(&ANNEX_K_CHROMA, quality)?,
        })
    }

    pub fn ones() -> Self {
        Self { luma: QuantTable::ones(), chroma: QuantTable::ones() }
    }

    pub fn for_luma(&self, luma: bool) -> &QuantTable {
        if luma {
            &self.luma
        } else {
            &self.chroma
        }
    }
}

/// `round(F / Q)` with round-half-away-from-zero.
pub fn quantize_block(coeffs: &[f64; 64], table: &QuantTable) -> [i32; 64] {
    let mut out = [0i32; 64];
    for i in 0..64 {
        out[i] = (coeffs[i] / table.0[i] as f64).round() as i32;
    }
    out
}

pub fn dequantize_block(quantized: &[i32; 64], table: &QuantTable) -> [f64; 64] {
    let mut out = [0.0; 64];
    for i in 0..64 {
        out[i] = quantized[i] as f64 * table.0[i] as f64;
    }
    out
}
