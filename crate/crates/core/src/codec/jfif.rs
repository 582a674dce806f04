//! JFIF container and baseline sequential Huffman entropy coding (4:4:4).

use super::block::{block_dims, Channel, CoefficientGrid};
use super::huffman::{
    category, extend, magnitude_bits, BitReader, BitWriter, BitsExhausted, DecodeTable, EncodeTable,
    HuffmanSpec,
};
use super::quant::{QuantTable, QuantTablePair};
use super::{CodecError, Unsupported};

/// `ZIGZAG[k]` is the natural-order index of the k-th coefficient in zigzag order.
pub const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, //
    12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6, 7, 14, 21, 28, //
    35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, //
    58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

/// Largest magnitude a quantized coefficient may take (12-bit signed range).
pub const MAX_COEFFICIENT: i32 = 2047;
/// Largest AC magnitude the baseline Huffman alphabet can express (category 10).
pub const MAX_AC: i32 = 1023;

pub mod marker {
    pub const SOI: u8 = 0xd8;
    pub const EOI: u8 = 0xd9;
    pub const SOS: u8 = 0xda;
    pub const DQT: u8 = 0xdb;
    pub const DRI: u8 = 0xdd;
    pub const DHT: u8 = 0xc4;
    pub const DAC: u8 = 0xcc;
    pub const SOF0: u8 = 0xc0;
    pub const SOF1: u8 = 0xc1;
    pub const APP0: u8 = 0xe0;
    pub const COM: u8 = 0xfe;

    pub fn name(m: u8) -> &'static str {
        match m {
            SOI => "SOI",
            EOI => "EOI",
            SOS => "SOS",
            DQT => "DQT",
            DRI => "DRI",
            DHT => "DHT",
            DAC => "DAC",
            0xc0..=0xcf => "SOF",
            0xd0..=0xd7 => "RST",
            0xe0..=0xef => "APPn",
            COM => "COM",
            _ => "marker",
        }
    }
}

/// A complete JFIF byte stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JfifBitstream(Vec<u8>);

impl JfifBitstream {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> usize {
        self.0.len() * 8
    }

    /// Bits per pixel for an image of the given dimensions.
    pub fn bpp(&self, width: usize, height: usize) -> f64 {
        self.bits() as f64 / (width * height) as f64
    }
}

fn push_segment(out: &mut Vec<u8>, marker: u8, payload: &[u8]) {
    out.extend_from_slice(&[0xff, marker]);
    out.extend_from_slice(&((payload.len() + 2) as u16).to_be_bytes());
    out.extend_from_slice(payload);
}

fn push_dht_table(payload: &mut Vec<u8>, class: u8, id: u8, spec: &HuffmanSpec) {
    payload.push((class << 4) | id);
    payload.extend_from_slice(&spec.counts);
    payload.extend_from_slice(&spec.values);
}

fn check_grids(grids: &[CoefficientGrid<i32>; 3]) -> Result<(usize, usize), CodecError> {
    let (w, h) = (grids[0].width, grids[0].height);
    if w == 0 || h == 0 || w > u16::MAX as usize || h > u16::MAX as usize {
        return Err(CodecError::GridMismatch(format!("unencodable dimensions {w}x{h}")));
    }
    let (bw, bh) = block_dims(w, h);
    for (grid, channel) in grids.iter().zip(Channel::ALL) {
        if grid.channel != channel {
            return Err(CodecError::GridMismatch(format!(
                "expected {channel:?} grid, found {:?}",
                grid.channel
            )));
        }
        if (grid.width, grid.height) != (w, h)
            || (grid.blocks_wide, grid.blocks_high) != (bw, bh)
            || grid.blocks.len() != bw * bh
        {
            return Err(CodecError::GridMismatch(format!(
                "{channel:?} grid does not cover {w}x{h} in {bw}x{bh} blocks"
            )));
        }
        for (block_idx, block) in grid.blocks.iter().enumerate() {
            if let Some(index) = block.iter().position(|v| v.abs() > MAX_COEFFICIENT) {
                return Err(CodecError::CoefficientOutOfRange {
                    block: block_idx,
                    index,
                    value: block[index],
                });
            }
        }
    }
    Ok((w, h))
}

fn put_symbol(w: &mut BitWriter, table: &EncodeTable, symbol: u8, kind: &'static str, block: usize, value: i32) -> Result<(), CodecError> {
    let (code, len) = table.code(symbol).ok_or(CodecError::NotEncodable { kind, block, value })?;
    w.put(code, len);
    Ok(())
}

fn encode_block(
    w: &mut BitWriter,
    block: &[i32; 64],
    prev_dc: &mut i32,
    dc: &EncodeTable,
    ac: &EncodeTable,
    block_idx: usize,
) -> Result<(), CodecError> {
    let diff = block[0] - *prev_dc;
    *prev_dc = block[0];
    let size = category(diff);
    if size > 11 {
        return Err(CodecError::NotEncodable { kind: "DC difference", block: block_idx, value: diff });
    }
    put_symbol(w, dc, size, "DC difference", block_idx, diff)?;
    w.put(magnitude_bits(diff), size);

    let mut run = 0u8;
    for &zz in &ZIGZAG[1..] {
        let v = block[zz];
        if v == 0 {
            run += 1;
            continue;
        }
        while run >= 16 {
            put_symbol(w, ac, 0xf0, "AC run", block_idx, 0)?;
            run -= 16;
        }
        let size = category(v);
        if size > 10 {
            return Err(CodecError::NotEncodable { kind: "AC", block: block_idx, value: v });
        }
        put_symbol(w, ac, (run << 4) | size, "AC", block_idx, v)?;
        w.put(magnitude_bits(v), size);
        run = 0;
    }
    if run > 0 {
        put_symbol(w, ac, 0x00, "EOB", block_idx, 0)?;
    }
    Ok(())
}

/// Writes Y, Cb, Cr coefficient grids as a baseline JFIF stream with the
/// Annex K Huffman tables and the given quantization tables.
pub fn entropy_encode(
    grids: &[CoefficientGrid<i32>; 3],
    tables: &QuantTablePair,
) -> Result<JfifBitstream, CodecError> {
    let (width, height) = check_grids(grids)?;
    let mut out = Vec::with_capacity(1024);
    out.extend_from_slice(&[0xff, marker::SOI]);
    push_segment(
        &mut out,
        marker::APP0,
        &[b'J', b'F', b'I', b'F', 0, 1, 1, 0, 0, 1, 0, 1, 0, 0],
    );
    for (id, table) in [(0u8, &tables.luma), (1, &tables.chroma)] {
        let mut payload = Vec::with_capacity(65);
        payload.push(id);
        payload.extend(ZIGZAG.iter().map(|&i| table.get(i)));
        push_segment(&mut out, marker::DQT, &payload);
    }
    let mut sof = vec![8];
    sof.extend_from_slice(&(height as u16).to_be_bytes());
    sof.extend_from_slice(&(width as u16).to_be_bytes());
    sof.push(3);
    for (id, tq) in [(1u8, 0u8), (2, 1), (3, 1)] {
        sof.extend_from_slice(&[id, 0x11, tq]);
    }
    push_segment(&mut out, marker::SOF0, &sof);

    let specs = [
        HuffmanSpec::luma_dc(),
        HuffmanSpec::luma_ac(),
        HuffmanSpec::chroma_dc(),
        HuffmanSpec::chroma_ac(),
    ];
    let mut dht = Vec::new();
    push_dht_table(&mut dht, 0, 0, &specs[0]);
    push_dht_table(&mut dht, 1, 0, &specs[1]);
    push_dht_table(&mut dht, 0, 1, &specs[2]);
    push_dht_table(&mut dht, 1, 1, &specs[3]);
    push_segment(&mut out, marker::DHT, &dht);

    push_segment(&mut out, marker::SOS, &[3, 1, 0x00, 2, 0x11, 3, 0x11, 0, 63, 0]);

    let enc: Vec<EncodeTable> = specs.iter().map(EncodeTable::new).collect();
    let mut w = BitWriter::new();
    let mut prev_dc = [0i32; 3];
    for b in 0..grids[0].blocks.len() {
        for (c, grid) in grids.iter().enumerate() {
            let (dc, ac) = if c == 0 { (&enc[0], &enc[1]) } else { (&enc[2], &enc[3]) };
            encode_block(&mut w, &grid.blocks[b], &mut prev_dc[c], dc, ac, b)?;
        }
    }
    out.extend_from_slice(&w.finish());
    out.extend_from_slice(&[0xff, marker::EOI]);
    Ok(JfifBitstream(out))
}

/// Result of parsing a baseline stream down to quantized coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedStream {
    pub width: usize,
    pub height: usize,
    /// One grid per component (Y only for grayscale streams).
    pub grids: Vec<CoefficientGrid<i32>>,
    /// Quantization table used by each component.
    pub component_tables: Vec<QuantTable>,
}

impl DecodedStream {
    /// The luma/chroma table pair (chroma repeats luma for grayscale).
    pub fn tables(&self) -> QuantTablePair {
        QuantTablePair {
            luma: self.component_tables[0],
            chroma: *self.component_tables.get(1).unwrap_or(&self.component_tables[0]),
        }
    }

    /// The three grids as an array, when the stream is a colour image.
    pub fn color_grids(&self) -> Option<[CoefficientGrid<i32>; 3]> {
        self.grids.clone().try_into().ok()
    }
}

struct FrameComponent {
    id: u8,
    table: u8,
}

struct Frame {
    width: usize,
    height: usize,
    components: Vec<FrameComponent>,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    /// Returns the payload of the segment whose marker was just read.
    fn segment(&mut self, m: u8) -> Result<&'a [u8], CodecError> {
        let start = self.pos;
        let truncated = CodecError::TruncatedSegment { marker: marker::name(m), offset: start };
        let len_bytes = self.data.get(start..start + 2).ok_or(truncated.clone())?;
        let len = u16::from_be_bytes([len_bytes[0], len_bytes[1]]) as usize;
        if len < 2 {
            return Err(CodecError::MalformedSegment {
                marker: marker::name(m),
                reason: format!("declared length {len} is below 2"),
            });
        }
        let payload = self.data.get(start + 2..start + len).ok_or(truncated)?;
        self.pos = start + len;
        Ok(payload)
    }

    fn next_marker(&mut self) -> Result<Option<u8>, CodecError> {
        let Some(&b) = self.data.get(self.pos) else {
            return Ok(None);
        };
        if b != 0xff {
            return Err(CodecError::ExpectedMarker { offset: self.pos, byte: b });
        }
        // skip fill bytes
        while self.data.get(self.pos) == Some(&0xff) {
            self.pos += 1;
        }
        match self.data.get(self.pos) {
            Some(&m) => {
                self.pos += 1;
                Ok(Some(m))
            }
            None => Ok(None),
        }
    }
}

fn malformed(m: u8, reason: impl Into<String>) -> CodecError {
    CodecError::MalformedSegment { marker: marker::name(m), reason: reason.into() }
}

fn parse_dqt(payload: &[u8], tables: &mut [Option<QuantTable>; 4]) -> Result<(), CodecError> {
    let mut p = payload;
    while !p.is_empty() {
        let (pq, tq) = (p[0] >> 4, p[0] & 0x0f);
        if pq != 0 {
            return Err(CodecError::Unsupported(Unsupported::TablePrecision(pq)));
        }
        if tq > 3 {
            return Err(malformed(marker::DQT, format!("table id {tq}")));
        }
        if p.len() < 65 {
            return Err(malformed(marker::DQT, "table shorter than 64 entries"));
        }
        let mut natural = [0u8; 64];
        for (k, &v) in p[1..65].iter().enumerate() {
            natural[ZIGZAG[k]] = v;
        }
        tables[tq as usize] = Some(
            QuantTable::new(natural).map_err(|_| malformed(marker::DQT, "zero quantizer"))?,
        );
        p = &p[65..];
    }
    Ok(())
}

fn parse_dht(payload: &[u8], dc: &mut [Option<DecodeTable>; 4], ac: &mut [Option<DecodeTable>; 4]) -> Result<(), CodecError> {
    let mut p = payload;
    while !p.is_empty() {
        if p.len() < 17 {
            return Err(malformed(marker::DHT, "table header shorter than 17 bytes"));
        }
        let (class, id) = (p[0] >> 4, p[0] & 0x0f);
        if class > 1 || id > 3 {
            return Err(malformed(marker::DHT, format!("class {class} id {id}")));
        }
        let mut counts = [0u8; 16];
        counts.copy_from_slice(&p[1..17]);
        let total: usize = counts.iter().map(|&c| c as usize).sum();
        if p.len() < 17 + total {
            return Err(malformed(marker::DHT, "fewer symbols than declared"));
        }
        let spec = HuffmanSpec { counts, values: p[17..17 + total].to_vec() };
        spec.validate().map_err(|r| malformed(marker::DHT, r))?;
        let slot = if class == 0 { &mut dc[id as usize] } else { &mut ac[id as usize] };
        *slot = Some(DecodeTable::new(&spec));
        p = &p[17 + total..];
    }
    Ok(())
}

fn parse_sof(m: u8, payload: &[u8]) -> Result<Frame, CodecError> {
    if payload.len() < 6 {
        return Err(malformed(m, "frame header shorter than 6 bytes"));
    }
    if payload[0] != 8 {
        return Err(CodecError::Unsupported(Unsupported::SamplePrecision(payload[0])));
    }
    let height = u16::from_be_bytes([payload[1], payload[2]]) as usize;
    let width = u16::from_be_bytes([payload[3], payload[4]]) as usize;
    let nf = payload[5];
    if width == 0 || height == 0 {
        return Err(malformed(m, format!("zero dimension {width}x{height}")));
    }
    if nf != 1 && nf != 3 {
        return Err(CodecError::Unsupported(Unsupported::ComponentCount(nf)));
    }
    if payload.len() != 6 + 3 * nf as usize {
        return Err(malformed(m, "length does not match component count"));
    }
    let mut components = Vec::new();
    for c in payload[6..].chunks_exact(3) {
        if c[1] != 0x11 {
            return Err(CodecError::Unsupported(Unsupported::Subsampling));
        }
        if c[2] > 3 {
            return Err(malformed(m, format!("quantization table id {}", c[2])));
        }
        components.push(FrameComponent { id: c[0], table: c[2] });
    }
    Ok(Frame { width, height, components })
}

fn decode_block(
    r: &mut BitReader<'_>,
    dc: &DecodeTable,
    ac: &DecodeTable,
    prev_dc: &mut i32,
    component: usize,
    block: usize,
) -> Result<[i32; 64], CodecError> {
    let exhausted = |_: BitsExhausted| CodecError::TruncatedEntropyData { component, block };
    let invalid = CodecError::InvalidHuffmanCode { component, block };
    let mut out = [0i32; 64];
    let size = dc.decode(r).map_err(exhausted)?.ok_or(invalid.clone())?;
    if size > 11 {
        return Err(invalid);
    }
    let diff = extend(r.bits(size).map_err(exhausted)?, size);
    *prev_dc += diff;
    out[0] = *prev_dc;
    let mut k = 1;
    while k < 64 {
        let rs = ac.decode(r).map_err(exhausted)?.ok_or(invalid.clone())?;
        let (run, size) = ((rs >> 4) as usize, rs & 0x0f);
        if size == 0 {
            if run == 15 {
                k += 16;
                continue;
            }
            break;
        }
        k += run;
        if k > 63 {
            return Err(invalid);
        }
        out[ZIGZAG[k]] = extend(r.bits(size).map_err(exhausted)?, size);
        k += 1;
    }
    if k > 64 {
        return Err(invalid);
    }
    Ok(out)
}

/// Parses a baseline (SOF0/SOF1, Huffman, 1×1 sampled) stream back to
/// quantized coefficients and the tables each component uses.
pub fn entropy_decode(bytes: &[u8]) -> Result<DecodedStream, CodecError> {
    if bytes.len() < 2 || bytes[0] != 0xff || bytes[1] != marker::SOI {
        let found = match bytes {
            [a, b, ..] => u16::from_be_bytes([*a, *b]),
            [a] => *a as u16,
            [] => 0,
        };
        return Err(CodecError::MissingSoi(found));
    }
    let mut cur = Cursor { data: bytes, pos: 2 };
    let mut qtables: [Option<QuantTable>; 4] = [None; 4];
    let mut dc_tables: [Option<DecodeTable>; 4] = Default::default();
    let mut ac_tables: [Option<DecodeTable>; 4] = Default::default();
    let mut frame: Option<Frame> = None;
    let mut decoded: Option<DecodedStream> = None;

    loop {
        let m = match cur.next_marker()? {
            Some(m) => m,
            None if decoded.is_some() => return Err(CodecError::MissingEoi),
            None => {
                return Err(CodecError::TruncatedSegment { marker: "SOS", offset: cur.pos });
            }
        };
        match m {
            marker::EOI => {
                return decoded.ok_or_else(|| malformed(marker::EOI, "end of image before any scan"));
            }
            marker::SOI => return Err(malformed(marker::SOI, "repeated start of image")),
            0xe0..=0xef | marker::COM => {
                cur.segment(m)?;
            }
            marker::DQT => parse_dqt(cur.segment(m)?, &mut qtables)?,
            marker::DHT => parse_dht(cur.segment(m)?, &mut dc_tables, &mut ac_tables)?,
            marker::DRI => {
                let p = cur.segment(m)?;
                if p.len() != 2 {
                    return Err(malformed(m, "restart interval must be 2 bytes"));
                }
                if u16::from_be_bytes([p[0], p[1]]) != 0 {
                    return Err(CodecError::Unsupported(Unsupported::RestartMarkers));
                }
            }
            marker::SOF0 | marker::SOF1 => {
                if frame.is_some() {
                    return Err(malformed(m, "second frame header"));
                }
                frame = Some(parse_sof(m, cur.segment(m)?)?);
            }
            0xc2 => return Err(CodecError::Unsupported(Unsupported::Progressive)),
            0xc3 => return Err(CodecError::Unsupported(Unsupported::Lossless)),
            0xc5..=0xc7 => return Err(CodecError::Unsupported(Unsupported::Hierarchical)),
            0xc9..=0xcb | 0xcd..=0xcf | marker::DAC => {
                return Err(CodecError::Unsupported(Unsupported::Arithmetic));
            }
            marker::SOS => {
                if decoded.is_some() {
                    return Err(CodecError::Unsupported(Unsupported::MultipleScans));
                }
                let frame = frame.as_ref().ok_or_else(|| malformed(m, "scan before frame header"))?;
                let header = cur.segment(m)?;
                let stream = decode_scan(header, &bytes[cur.pos..], frame, &qtables, &dc_tables, &ac_tables)?;
                cur.pos += stream.1;
                decoded = Some(stream.0);
            }
            other => {
                return Err(CodecError::MalformedSegment {
                    marker: marker::name(other),
                    reason: format!("unexpected marker 0xff{other:02x}"),
                });
            }
        }
    }
}

fn decode_scan(
    header: &[u8],
    data: &[u8],
    frame: &Frame,
    qtables: &[Option<QuantTable>; 4],
    dc_tables: &[Option<DecodeTable>; 4],
    ac_tables: &[Option<DecodeTable>; 4],
) -> Result<(DecodedStream, usize), CodecError> {
    let ns = *header.first().ok_or_else(|| malformed(marker::SOS, "empty scan header"))? as usize;
    if header.len() != 4 + 2 * ns {
        return Err(malformed(marker::SOS, "length does not match component count"));
    }
    if ns != frame.components.len() {
        return Err(CodecError::Unsupported(Unsupported::MultipleScans));
    }
    let tail = &header[1 + 2 * ns..];
    if tail != [0, 63, 0] {
        return Err(malformed(marker::SOS, format!("spectral selection {tail:?} is not baseline")));
    }
    let mut scan_tables = Vec::with_capacity(ns);
    let mut component_tables = Vec::with_capacity(ns);
    for (i, sel) in header[1..1 + 2 * ns].chunks_exact(2).enumerate() {
        let fc = &frame.components[i];
        if sel[0] != fc.id {
            return Err(malformed(marker::SOS, "scan component order differs from frame"));
        }
        let (td, ta) = ((sel[1] >> 4) as usize, (sel[1] & 0x0f) as usize);
        if td > 3 || ta > 3 {
            return Err(malformed(marker::SOS, "Huffman table id above 3"));
        }
        let dc = dc_tables[td].as_ref().ok_or(CodecError::MissingTable("DHT"))?;
        let ac = ac_tables[ta].as_ref().ok_or(CodecError::MissingTable("DHT"))?;
        scan_tables.push((dc, ac));
        component_tables.push(qtables[fc.table as usize].ok_or(CodecError::MissingTable("DQT"))?);
    }

    let channels: &[Channel] = if ns == 1 { &[Channel::Y] } else { &Channel::ALL };
    let mut grids: Vec<CoefficientGrid<i32>> = channels
        .iter()
        .map(|&c| CoefficientGrid::zeros(c, frame.width, frame.height))
        .collect();
    let mut reader = BitReader::new(data);
    let mut prev_dc = vec![0i32; ns];
    let count = grids[0].blocks.len();
    for b in 0..count {
        for c in 0..ns {
            let (dc, ac) = scan_tables[c];
            grids[c].blocks[b] = decode_block(&mut reader, dc, ac, &mut prev_dc[c], c, b)?;
        }
    }
    let consumed = reader.position();
    Ok((
        DecodedStream { width: frame.width, height: frame.height, grids, component_tables },
        consumed,
    ))
}

/// One marker segment found by [`validate_markers`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentInfo {
    pub marker: u8,
    pub offset: usize,
    /// Declared segment length (0 for standalone markers).
    pub length: usize,
}

/// Walks the marker structure without decoding: checks SOI/EOI framing and
/// that every declared segment length fits the data.
pub fn validate_markers(bytes: &[u8]) -> Result<Vec<SegmentInfo>, CodecError> {
    if bytes.len() < 4 || bytes[..2] != [0xff, marker::SOI] {
        return Err(CodecError::MissingSoi(bytes.get(..2).map_or(0, |b| u16::from_be_bytes([b[0], b[1]]))));
    }
    if bytes[bytes.len() - 2..] != [0xff, marker::EOI] {
        return Err(CodecError::MissingEoi);
    }
    let mut segments = vec![SegmentInfo { marker: marker::SOI, offset: 0, length: 0 }];
    let mut cur = Cursor { data: bytes, pos: 2 };
    while let Some(m) = cur.next_marker()? {
        let offset = cur.pos - 2;
        if m == marker::EOI {
            segments.push(SegmentInfo { marker: m, offset, length: 0 });
            if cur.pos != bytes.len() {
                return Err(malformed(m, "data after end of image"));
            }
            return Ok(segments);
        }
        let start = cur.pos;
        cur.segment(m)?;
        segments.push(SegmentInfo { marker: m, offset, length: cur.pos - start });
        if m == marker::SOS {
            // skip entropy data: stop at the first non-stuffing, non-RST marker
            while cur.pos + 1 < bytes.len() {
                if bytes[cur.pos] == 0xff && !matches!(bytes[cur.pos + 1], 0x00 | 0xd0..=0xd7) {
                    break;
                }
                cur.pos += 1;
            }
        }
    }
    Err(CodecError::MissingEoi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zero_grids(w: usize, h: usize) -> [CoefficientGrid<i32>; 3] {
        Channel::ALL.map(|c| CoefficientGrid::zeros(c, w, h))
    }

    fn random_grids(rng: &mut ChaCha8Rng, w: usize, h: usize) -> [CoefficientGrid<i32>; 3] {
        let mut grids = zero_grids(w, h);
        for grid in grids.iter_mut() {
            for block in grid.blocks.iter_mut() {
                block[0] = rng.gen_range(-1023..=1023);
                for v in block[1..].iter_mut() {
                    *v = match rng.gen_range(0..4) {
                        0 => rng.gen_range(-MAX_AC..=MAX_AC),
                        1 => rng.gen_range(-3..=3),
                        _ => 0,
                    };
                }
            }
        }
        grids
    }

    #[test]
    fn zigzag_is_a_permutation() {
        let mut seen = [false; 64];
        for &i in &ZIGZAG {
            assert!(!seen[i]);
            seen[i] = true;
        }
    }

    #[test]
    fn all_zero_image_frames() {
        let bs = entropy_encode(&zero_grids(8, 8), &QuantTablePair::annex_k()).unwrap();
        let b = bs.as_bytes();
        assert_eq!(&b[..2], &[0xff, 0xd8]);
        assert_eq!(&b[b.len() - 2..], &[0xff, 0xd9]);
        let segs = validate_markers(b).unwrap();
        let kinds: Vec<u8> = segs.iter().map(|s| s.marker).collect();
        assert_eq!(kinds, vec![0xd8, 0xe0, 0xdb, 0xdb, 0xc0, 0xc4, 0xda, 0xd9]);
    }

    #[test]
    fn segment_lengths_match_layout() {
        let bs = entropy_encode(&zero_grids(16, 8), &QuantTablePair::annex_k()).unwrap();
        let segs = validate_markers(bs.as_bytes()).unwrap();
        let len = |m| segs.iter().find(|s| s.marker == m).unwrap().length;
        assert_eq!(len(marker::APP0), 16);
        assert_eq!(len(marker::DQT), 67);
        assert_eq!(len(marker::SOF0), 17);
        assert_eq!(len(marker::DHT), 2 + 4 * 17 + 12 + 12 + 162 + 162);
        assert_eq!(len(marker::SOS), 12);
        let app0 = &bs.as_bytes()[segs[1].offset + 4..segs[1].offset + 11];
        assert_eq!(app0, b"JFIF\0\x01\x01");
    }

    #[test]
    fn random_grids_round_trip_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(w, h) in &[(8, 8), (17, 9), (40, 24)] {
            let grids = random_grids(&mut rng, w, h);
            let tables = QuantTablePair::for_quality(75).unwrap();
            let bs = entropy_encode(&grids, &tables).unwrap();
            let dec = entropy_decode(bs.as_bytes()).unwrap();
            assert_eq!((dec.width, dec.height), (w, h));
            assert_eq!(dec.tables(), tables);
            assert_eq!(dec.color_grids().unwrap(), grids);
        }
    }

    #[test]
    fn out_of_range_coefficients_are_rejected() {
        let mut grids = zero_grids(8, 8);
        grids[1].blocks[0][5] = 2048;
        assert!(matches!(
            entropy_encode(&grids, &QuantTablePair::annex_k()),
            Err(CodecError::CoefficientOutOfRange { value: 2048, .. })
        ));
        grids[1].blocks[0][5] = 1500;
        assert!(matches!(
            entropy_encode(&grids, &QuantTablePair::annex_k()),
            Err(CodecError::NotEncodable { kind: "AC", .. })
        ));
    }

    #[test]
    fn truncation_is_reported_per_marker() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let bs = entropy_encode(&random_grids(&mut rng, 32, 32), &QuantTablePair::annex_k()).unwrap();
        let b = bs.as_bytes();
        let cut = &b[..b.len() - 40];
        let err = entropy_decode(cut).unwrap_err();
        assert!(matches!(err, CodecError::TruncatedEntropyData { .. }), "{err:?}");
        assert!(err.to_string().contains("SOS"));
        let err = entropy_decode(&b[..30]).unwrap_err();
        assert!(matches!(err, CodecError::TruncatedSegment { marker: "DQT", .. }), "{err:?}");
        assert_eq!(entropy_decode(&b[..b.len() - 2]).unwrap_err(), CodecError::MissingEoi);
        assert!(matches!(entropy_decode(&b[2..]), Err(CodecError::MissingSoi(_))));
    }

    #[test]
    fn unsupported_modes_have_distinct_errors() {
        let bs = entropy_encode(&zero_grids(8, 8), &QuantTablePair::annex_k()).unwrap();
        let segs = validate_markers(bs.as_bytes()).unwrap();
        let sof = segs.iter().find(|s| s.marker == marker::SOF0).unwrap().offset;

        let mut progressive = bs.as_bytes().to_vec();
        progressive[sof + 1] = 0xc2;
        assert_eq!(
            entropy_decode(&progressive).unwrap_err(),
            CodecError::Unsupported(Unsupported::Progressive)
        );

        let mut subsampled = bs.as_bytes().to_vec();
        subsampled[sof + 2 + 2 + 6 + 1] = 0x22;
        assert_eq!(
            entropy_decode(&subsampled).unwrap_err(),
            CodecError::Unsupported(Unsupported::Subsampling)
        );

        let mut arithmetic = bs.as_bytes().to_vec();
        arithmetic[sof + 1] = 0xc9;
        assert_eq!(
            entropy_decode(&arithmetic).unwrap_err(),
            CodecError::Unsupported(Unsupported::Arithmetic)
        );
    }
}
