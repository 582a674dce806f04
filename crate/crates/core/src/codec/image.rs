use super::CodecError;

/// An 8-bit RGB raster, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, CodecError> {
        if width == 0 || height == 0 {
            return Err(CodecError::InvalidImage(format!(
                "dimensions must be non-zero, got {width}x{height}"
            )));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(3))
            .ok_or_else(|| CodecError::InvalidImage("dimensions overflow".into()))?;
        if data.len() != expected {
            return Err(CodecError::InvalidImage(format!(
                "expected {expected} bytes for {width}x{height}, got {}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be non-zero");
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        Self::from_fn(width, height, |_, _| rgb)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Copies out the `w`×`h` region whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Self, CodecError> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(CodecError::InvalidImage(format!(
                "crop {w}x{h}+{x}+{y} outside {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h * 3);
        for row in y..y + h {
            let start = (row * self.width + x) * 3;
            data.extend_from_slice(&self.data[start..start + w * 3]);
        }
        Ok(Self { width: w, height: h, data })
    }

    /// Extends the image to `w`×`h` by replicating the last column and row.
    pub fn pad_replicate(&self, w: usize, h: usize) -> Self {
        assert!(w >= self.width && h >= self.height);
        Self::from_fn(w, h, |x, y| self.pixel(x.min(self.width - 1), y.min(self.height - 1)))
    }
}

/// A single real-valued image plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "plane data length mismatch");
        Self { width, height, data }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Full-range YCbCr planes. Samples are real-valued with nominal range [0, 255];
/// they are only rounded and clamped when converted back to bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct YcbcrImage {
    pub y: Plane,
    pub cb: Plane,
    pub cr: Plane,
}

impl YcbcrImage {
    pub fn new(y: Plane, cb: Plane, cr: Plane) -> Result<Self, CodecError> {
        let dims = (y.width, y.height);
        if (cb.width, cb.height) != dims || (cr.width, cr.height) != dims {
            return Err(CodecError::InvalidImage("YCbCr plane dimensions differ".into()));
        }
        Ok(Self { y, cb, cr })
    }

    pub fn width(&self) -> usize {
        self.y.width
    }

    pub fn height(&self) -> usize {
        self.y.height
    }

    pub fn planes(&self) -> [&Plane; 3] {
        [&self.y, &self.cb, &self.cr]
    }
}

/// Rounds half away from zero and saturates into a byte.
pub fn sample_to_byte(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}
