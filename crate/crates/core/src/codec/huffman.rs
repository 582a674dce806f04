//! Huffman tables (Annex K defaults), canonical code construction and the
//! bit-level reader/writer for entropy-coded segments.

use super::CodecError;

/// A DHT table as transmitted: code counts per length 1..=16 and symbol values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffmanSpec {
    pub counts: [u8; 16],
    pub values: Vec<u8>,
}

impl HuffmanSpec {
    pub fn luma_dc() -> Self {
        Self {
            counts: [0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0],
            values: (0..12).collect(),
        }
    }

    pub fn chroma_dc() -> Self {
        Self {
            counts: [0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0],
            values: (0..12).collect(),
        }
    }

    pub fn luma_ac() -> Self {
        Self {
            counts: [0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7d],
            values: LUMA_AC_VALUES.to_vec(),
        }
    }

    pub fn chroma_ac() -> Self {
        Self {
            counts: [0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 0x77],
            values: CHROMA_AC_VALUES.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let total: usize = self.counts.iter().map(|&c| c as usize).sum();
        if total != self.values.len() {
            return Err(format!("{} code counts but {} symbols", total, self.values.len()));
        }
        if total > 256 {
            return Err(format!("{total} symbols exceeds 256"));
        }
        // Kraft inequality: codes must fit in a binary tree
        let mut available = 1u32;
        for &c in &self.counts {
            available <<= 1;
            if c as u32 > available {
                return Err("code lengths over-subscribe the code space".into());
            }
            available -= c as u32;
        }
        Ok(())
    }

    /// Canonical codes in symbol-list order, as `(code, length)`.
    fn canonical_codes(&self) -> Vec<(u16, u8)> {
        let mut out = Vec::with_capacity(self.values.len());
        let mut code = 0u32;
        for (len_idx, &count) in self.counts.iter().enumerate() {
            for _ in 0..count {
                out.push((code as u16, len_idx as u8 + 1));
                code += 1;
            }
            code <<= 1;
        }
        out
    }
}

const LUMA_AC_VALUES: [u8; 162] = [
    0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06, 0x13, 0x51, 0x61, 0x07,
    0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xa1, 0x08, 0x23, 0x42, 0xb1, 0xc1, 0x15, 0x52, 0xd1, 0xf0,
    0x24, 0x33, 0x62, 0x72, 0x82, 0x09, 0x0a, 0x16, 0x17, 0x18, 0x19, 0x1a, 0x25, 0x26, 0x27, 0x28,
    0x29, 0x2a, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49,
    0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5a, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69,
    0x6a, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7a, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89,
    0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9a, 0xa2, 0xa3, 0xa4, 0xa5, 0xa6, 0xa7,
    0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4, 0xb5, 0xb6, 0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3, 0xc4, 0xc5,
    0xc6, 0xc7, 0xc8, 0xc9, 0xca, 0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda, 0xe1, 0xe2,
    0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8, 0xe9, 0xea, 0xf1, 0xf2, 0xf3, 0xf4, 0xf5, 0xf6, 0xf7, 0xf8,
    0xf9, 0xfa,
];

const CHROMA_AC_VALUES: [u8; 162] = [
    0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31, 0x06, 0x12, 0x41, 0x51, 0x07, 0x61, 0x71,
    0x13, 0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91, 0xa1, 0xb1, 0xc1, 0x09, 0x23, 0x33, 0x52, 0xf0,
    0x15, 0x62, 0x72, 0xd1, 0x0a, 0x16, 0x24, 0x34, 0xe1, 0x25, 0xf1, 0x17, 0x18, 0x19, 0x1a, 0x26,
    0x27, 0x28, 0x29, 0x2a, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48,
    0x49, 0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5a, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68,
    0x69, 0x6a, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7a, 0x82, 0x83, 0x84, 0x85, 0x86, 0x87,
    0x88, 0x89, 0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9a, 0xa2, 0xa3, 0xa4, 0xa5,
    0xa6, 0xa7, 0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4, 0xb5, 0xb6, 0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3,
    0xc4, 0xc5, 0xc6, 0xc7, 0xc8, 0xc9, 0xca, 0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda,
    0xe2, 0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8, 0xe9, 0xea, 0xf2, 0xf3, 0xf4, 0xf5, 0xf6, 0xf7, 0xf8,
    0xf9, 0xfa,
];

/// Symbol → (code, length) lookup for encoding.
#[derive(Debug, Clone)]
pub struct EncodeTable {
    codes: [(u16, u8); 256],
}

impl EncodeTable {
    pub fn new(spec: &HuffmanSpec) -> Self {
        let mut codes = [(0u16, 0u8); 256];
        for (&sym, code) in spec.values.iter().zip(spec.canonical_codes()) {
            codes[sym as usize] = code;
        }
        Self { codes }
    }

    pub fn code(&self, symbol: u8) -> Option<(u16, u8)> {
        let c = self.codes[symbol as usize];
        (c.1 > 0).then_some(c)
    }
}

/// Canonical decoding tables (maxcode / valptr form).
#[derive(Debug, Clone)]
pub struct DecodeTable {
    min_code: [i32; 17],
    max_code: [i32; 17],
    val_ptr: [usize; 17],
    values: Vec<u8>,
}

impl DecodeTable {
    pub fn new(spec: &HuffmanSpec) -> Self {
        let mut min_code = [0i32; 17];
        let mut max_code = [-1i32; 17];
        let mut val_ptr = [0usize; 17];
        let mut code = 0i32;
        let mut k = 0usize;
        for len in 1..=16 {
            let count = spec.counts[len - 1] as usize;
            if count > 0 {
                val_ptr[len] = k;
                min_code[len] = code;
                code += count as i32;
                k += count;
                max_code[len] = code - 1;
            }
            code <<= 1;
        }
        Self { min_code, max_code, val_ptr, values: spec.values.clone() }
    }

    /// Reads one symbol bit by bit. `Ok(None)` means the bits form no valid code.
    pub fn decode(&self, reader: &mut BitReader<'_>) -> Result<Option<u8>, BitsExhausted> {
        let mut code = 0i32;
        for len in 1..=16 {
            code = (code << 1) | reader.bit()? as i32;
            if code <= self.max_code[len] {
                let idx = self.val_ptr[len] + (code - self.min_code[len]) as usize;
                return Ok(self.values.get(idx).copied());
            }
        }
        Ok(None)
    }
}

/// Magnitude category of a coefficient value (number of bits needed).
pub fn category(value: i32) -> u8 {
    (32 - value.unsigned_abs().leading_zeros()) as u8
}

/// The `category(value)` low bits transmitted after a Huffman symbol.
pub fn magnitude_bits(value: i32) -> u16 {
    let size = category(value);
    let v = if value < 0 { value - 1 } else { value };
    (v & ((1i32 << size) - 1)) as u16
}

/// Inverse of [`magnitude_bits`] (the EXTEND procedure).
pub fn extend(bits: u16, size: u8) -> i32 {
    if size == 0 {
        return 0;
    }
    let v = bits as i32;
    if v < (1 << (size - 1)) {
        v - (1 << size) + 1
    } else {
        v
    }
}

/// MSB-first bit writer that stuffs a zero byte after every 0xFF.
#[derive(Debug, Default)]
pub struct BitWriter {
    out: Vec<u8>,
    acc: u32,
    nbits: u8,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, bits: u16, count: u8) {
        debug_assert!(count <= 16);
        for i in (0..count).rev() {
            self.acc = (self.acc << 1) | ((bits >> i) & 1) as u32;
            self.nbits += 1;
            if self.nbits == 8 {
                self.emit(self.acc as u8);
                self.acc = 0;
                self.nbits = 0;
            }
        }
    }

    fn emit(&mut self, byte: u8) {
        self.out.push(byte);
        if byte == 0xff {
            self.out.push(0x00);
        }
    }

    /// Pads the final partial byte with 1-bits and returns the stuffed bytes.
    pub fn finish(mut self) -> Vec<u8> {
        if self.nbits > 0 {
            let pad = 8 - self.nbits;
            self.put((1u16 << pad) - 1, pad);
        }
        self.out
    }
}

/// The entropy-coded segment ended before the decoder was done with it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BitsExhausted;

/// MSB-first reader over an entropy-coded segment, removing stuffed zeros.
/// Stops at the first marker; reading past it is an error, never zero-fill.
pub struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
    acc: u8,
    nbits: u8,
}

impl<'a> BitReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0, acc: 0, nbits: 0 }
    }

    pub fn bit(&mut self) -> Result<u8, BitsExhausted> {
        if self.nbits == 0 {
            let byte = *self.data.get(self.pos).ok_or(BitsExhausted)?;
            if byte == 0xff {
                match self.data.get(self.pos + 1) {
                    Some(0x00) => self.pos += 2,
                    _ => return Err(BitsExhausted),
                }
            } else {
                self.pos += 1;
            }
            self.acc = byte;
            self.nbits = 8;
        }
        self.nbits -= 1;
        Ok((self.acc >> self.nbits) & 1)
    }

    pub fn bits(&mut self, count: u8) -> Result<u16, BitsExhausted> {
        let mut v = 0u16;
        for _ in 0..count {
            v = (v << 1) | self.bit()? as u16;
        }
        Ok(v)
    }

    /// Byte offset just past the consumed data (the start of the next marker).
    pub fn position(&self) -> usize {
        self.pos
    }
}

impl From<BitsExhausted> for CodecError {
    fn from(_: BitsExhausted) -> Self {
        CodecError::TruncatedEntropyData { component: 0, block: 0 }
    }
}
