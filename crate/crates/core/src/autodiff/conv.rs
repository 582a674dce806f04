//! Convolution via im2col + GEMM, and non-overlapping average pooling.

use super::gemm::gemm;
use super::AutodiffError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub n: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(input: &[usize], weight: &[usize], stride: usize, padding: usize) -> Result<Self, AutodiffError> {
        let bad = |reason: String| AutodiffError::InvalidArgument { op: "conv2d", reason };
        if input.len() != 4 || weight.len() != 4 || input[1] != weight[1] {
            return Err(AutodiffError::ShapeMismatch { op: "conv2d", left: input.to_vec(), right: weight.to_vec() });
        }
        if stride == 0 {
            return Err(bad("stride must be positive".into()));
        }
        let (h, w, kh, kw) = (input[2], input[3], weight[2], weight[3]);
        if kh == 0 || kw == 0 || h + 2 * padding < kh || w + 2 * padding < kw {
            return Err(bad(format!("kernel {kh}x{kw} does not fit input {h}x{w} with padding {padding}")));
        }
        Ok(Self {
            n: input[0],
            c_in: input[1],
            h,
            w,
            c_out: weight[0],
            kh,
            kw,
            stride,
            padding,
            out_h: (h + 2 * padding - kh) / stride + 1,
            out_w: (w + 2 * padding - kw) / stride + 1,
        })
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.n, self.c_out, self.out_h, self.out_w]
    }

    fn patch_len(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Input offset for (channel, ky, kx, oy, ox), or None in the padding.
    #[inline]
    fn source(&self, c: usize, ky: usize, kx: usize, oy: usize, ox: usize) -> Option<usize> {
        let iy = (oy * self.stride + ky).checked_sub(self.padding)?;
        let ix = (ox * self.stride + kx).checked_sub(self.padding)?;
        (iy < self.h && ix < self.w).then(|| (c * self.h + iy) * self.w + ix)
    }

    /// Columns `[c_in*kh*kw, out_h*out_w]` for one image.
    fn im2col(&self, image: &[f64], cols: &mut [f64]) {
        let p = self.positions();
        for c in 0..self.c_in {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = ((c * self.kh + ky) * self.kw + kx) * p;
                    for oy in 0..self.out_h {
                        for ox in 0..self.out_w {
                            cols[row + oy * self.out_w + ox] = self.source(c, ky, kx, oy, ox).map_or(0.0, |i| image[i]);
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], image: &mut [f64]) {
        let p = self.positions();
        for c in 0..self.c_in {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = ((c * self.kh + ky) * self.kw + kx) * p;
                    for oy in 0..self.out_h {
                        for ox in 0..self.out_w {
                            if let Some(i) = self.source(c, ky, kx, oy, ox) {
                                image[i] += cols[row + oy * self.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward(g: &ConvGeometry, input: &[f64], weight: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
    let (k, p) = (g.patch_len(), g.positions());
    let in_size = g.c_in * g.h * g.w;
    let out_size = g.c_out * p;
    let mut out = vec![0.0; g.n * out_size];
    let mut cols = vec![0.0; k * p];
    for b in 0..g.n {
        g.im2col(&input[b * in_size..(b + 1) * in_size], &mut cols);
        let dst = &mut out[b * out_size..(b + 1) * out_size];
        gemm(g.c_out, k, p, weight, false, &cols, false, dst, false);
        if let Some(bias) = bias {
            for (co, chunk) in dst.chunks_mut(p).enumerate() {
                chunk.iter_mut().for_each(|v| *v += bias[co]);
            }
        }
    }
    out
}

pub(crate) struct ConvGrads {
    pub input: Option<Vec<f64>>,
    pub weight: Option<Vec<f64>>,
}

pub(crate) fn conv2d_backward(
    g: &ConvGeometry,
    input: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    want_input: bool,
    want_weight: bool,
) -> ConvGrads {
    let (k, p) = (g.patch_len(), g.positions());
    let in_size = g.c_in * g.h * g.w;
    let out_size = g.c_out * p;
    let mut gi = want_input.then(|| vec![0.0; g.n * in_size]);
    let mut gw = want_weight.then(|| vec![0.0; g.c_out * k]);
    let mut cols = vec![0.0; k * p];
    for b in 0..g.n {
        let go = &grad_out[b * out_size..(b + 1) * out_size];
        if let Some(gw) = gw.as_mut() {
            g.im2col(&input[b * in_size..(b + 1) * in_size], &mut cols);
            gemm(g.c_out, p, k, go, false, &cols, true, gw, true);
        }
        if let Some(gi) = gi.as_mut() {
            gemm(k, g.c_out, p, weight, true, go, false, &mut cols, false);
            g.col2im(&cols, &mut gi[b * in_size..(b + 1) * in_size]);
        }
    }
    ConvGrads { input: gi, weight: gw }
}

pub(crate) fn avg_pool2d_forward(shape: &[usize], size: usize, input: &[f64]) -> Vec<f64> {
    let (h, w) = (shape[2], shape[3]);
    let (oh, ow) = (h / size, w / size);
    let norm = 1.0 / (size * size) as f64;
    let mut out = vec![0.0; shape[0] * shape[1] * oh * ow];
    for (plane, dst) in input.chunks(h * w).zip(out.chunks_mut(oh * ow)) {
        for y in 0..h {
            for x in 0..w {
                dst[(y / size) * ow + x / size] += plane[y * w + x] * norm;
            }
        }
    }
    out
}

pub(crate) fn avg_pool2d_backward(shape: &[usize], size: usize, grad_out: &[f64]) -> Vec<f64> {
    let (h, w) = (shape[2], shape[3]);
    let (oh, ow) = (h / size, w / size);
    let norm = 1.0 / (size * size) as f64;
    let mut gi = vec![0.0; shape.iter().product()];
    for (dst, go) in gi.chunks_mut(h * w).zip(grad_out.chunks(oh * ow)) {
        for y in 0..h {
            for x in 0..w {
                dst[y * w + x] = go[(y / size) * ow + x / size] * norm;
            }
        }
    }
    gi
}
