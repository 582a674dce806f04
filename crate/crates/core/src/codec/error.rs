use thiserror::Error;

/// Features of the JPEG format this codec deliberately does not handle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unsupported {
    Progressive,
    Arithmetic,
    Lossless,
    Hierarchical,
    Subsampling,
    RestartMarkers,
    SamplePrecision(u8),
    TablePrecision(u8),
    ComponentCount(u8),
    MultipleScans,
}

impl std::fmt::Display for Unsupported {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Unsupported::Progressive => write!(f, "progressive DCT streams"),
            Unsupported::Arithmetic => write!(f, "arithmetic-coded streams"),
            Unsupported::Lossless => write!(f, "lossless JPEG"),
            Unsupported::Hierarchical => write!(f, "hierarchical (differential) frames"),
            Unsupported::Subsampling => write!(f, "chroma subsampling (only 1x1 sampling is handled)"),
            Unsupported::RestartMarkers => write!(f, "restart intervals"),
            Unsupported::SamplePrecision(p) => write!(f, "{p}-bit sample precision"),
            Unsupported::TablePrecision(p) => write!(f, "quantization table precision {p}"),
            Unsupported::ComponentCount(n) => write!(f, "{n} image components"),
            Unsupported::MultipleScans => write!(f, "multi-scan sequential streams"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("quantization table entry {value} at index {index} is outside [1, 255]")]
    InvalidQuantTable { index: usize, value: i64 },

    #[error("quality {0} is outside 1..=100")]
    InvalidQuality(i64),

    #[error("coefficient grids disagree: {0}")]
    GridMismatch(String),

    #[error("quantized coefficient {value} in block {block} (index {index}) exceeds the 12-bit range")]
    CoefficientOutOfRange { block: usize, index: usize, value: i32 },

    #[error("{kind} value {value} in block {block} cannot be coded with baseline Huffman tables")]
    NotEncodable { kind: &'static str, block: usize, value: i32 },

    #[error("stream does not start with SOI (found {0:#06x})")]
    MissingSoi(u16),

    #[error("expected a marker at offset {offset}, found byte {byte:#04x}")]
    ExpectedMarker { offset: usize, byte: u8 },

    #[error("truncated {marker} segment at offset {offset}")]
    TruncatedSegment { marker: &'static str, offset: usize },

    #[error("malformed {marker} segment: {reason}")]
    MalformedSegment { marker: &'static str, reason: String },

    #[error("entropy-coded data after SOS is truncated (component {component}, block {block})")]
    TruncatedEntropyData { component: usize, block: usize },

    #[error("invalid Huffman code in entropy data after SOS (component {component}, block {block})")]
    InvalidHuffmanCode { component: usize, block: usize },

    #[error("stream ends without an EOI marker")]
    MissingEoi,

    #[error("missing {0} before SOS")]
    MissingTable(&'static str),

    #[error("unsupported stream: {0}")]
    Unsupported(Unsupported),

    #[error("malformed PPM: {0}")]
    Ppm(String),
}
