//! Reconstruction quality metrics on 8-bit images.

use thiserror::Error;

use crate::codec::{rgb_to_ycbcr, Plane, RgbImage};

/// Value reported for a perfect reconstruction instead of infinity.
pub const DB_CAP: f64 = 100.0;
pub const MSSSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
pub const MSSSIM_MIN_SIZE: usize = 176;
const WINDOW: usize = 11;
const WINDOW_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const PEAK: f64 = 255.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("inputs differ in size: {0} vs {1}")]
    SizeMismatch(String, String),
    #[error("MS-SSIM needs images of at least {min}x{min} pixels, got {width}x{height}")]
    TooSmall { min: usize, width: usize, height: usize },
}

fn same_len(a: &[f64], b: &[f64]) -> Result<(), MetricError> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(MetricError::SizeMismatch(a.len().to_string(), b.len().to_string()))
    }
}

pub fn mse(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    same_len(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len().max(1) as f64)
}

pub fn mae(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    same_len(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len().max(1) as f64)
}

/// `10·log10(255² / mse)`, capped for zero error.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        DB_CAP
    } else {
        (10.0 * (PEAK * PEAK / mse).log10()).min(DB_CAP)
    }
}

fn check_images(a: &RgbImage, b: &RgbImage) -> Result<(), MetricError> {
    if a.width() == b.width() && a.height() == b.height() {
        Ok(())
    } else {
        Err(MetricError::SizeMismatch(
            format!("{}x{}", a.width(), a.height()),
            format!("{}x{}", b.width(), b.height()),
        ))
    }
}

fn as_f64(img: &RgbImage) -> Vec<f64> {
    img.data().iter().map(|&v| v as f64).collect()
}

/// MSE over all pixels and channels.
pub fn image_mse(a: &RgbImage, b: &RgbImage) -> Result<f64, MetricError> {
    check_images(a, b)?;
    mse(&as_f64(a), &as_f64(b))
}

pub fn image_psnr(a: &RgbImage, b: &RgbImage) -> Result<f64, MetricError> {
    Ok(psnr_from_mse(image_mse(a, b)?))
}

/// `-10·log10(1 - v)`, capped.
pub fn msssim_db(v: f64) -> f64 {
    if v >= 1.0 {
        DB_CAP
    } else {
        (-10.0 * (1.0 - v).log10()).min(DB_CAP)
    }
}

fn gaussian_window() -> [f64; WINDOW] {
    let c = (WINDOW / 2) as f64;
    let mut w: [f64; WINDOW] = std::array::from_fn(|i| (-((i as f64 - c).powi(2)) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp());
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

/// Separable "valid" filtering with the Gaussian window.
fn filter(p: &Plane, win: &[f64; WINDOW]) -> Plane {
    let (w, h) = (p.width, p.height);
    let ow = w + 1 - WINDOW;
    let oh = h + 1 - WINDOW;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &p.data[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = win.iter().zip(&row[x..x + WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..WINDOW).map(|k| win[k] * tmp[(y + k) * ow + x]).sum();
        }
    }
    Plane::new(ow, oh, out)
}

fn product(a: &Plane, b: &Plane) -> Plane {
    Plane::new(a.width, a.height, a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect())
}

/// Mean luminance and contrast-structure terms at one scale.
fn ssim_terms(x: &Plane, y: &Plane) -> (f64, f64) {
    let win = gaussian_window();
    let c1 = (K1 * PEAK).powi(2);
    let c2 = (K2 * PEAK).powi(2);
    let (mx, my) = (filter(x, &win), filter(y, &win));
    let (sxx, syy, sxy) = (filter(&product(x, x), &win), filter(&product(y, y), &win), filter(&product(x, y), &win));
    let n = mx.data.len() as f64;
    let (mut l_sum, mut cs_sum) = (0.0, 0.0);
    for i in 0..mx.data.len() {
        let (ux, uy) = (mx.data[i], my.data[i]);
        let vx = sxx.data[i] - ux * ux;
        let vy = syy.data[i] - uy * uy;
        let cov = sxy.data[i] - ux * uy;
        let cs = (2.0 * cov + c2) / (vx + vy + c2);
        l_sum += (2.0 * ux * uy + c1) / (ux * ux + uy * uy + c1) * cs;
        cs_sum += cs;
    }
    (l_sum / n, cs_sum / n)
}

fn downsample(p: &Plane) -> Plane {
    let (w, h) = (p.width / 2, p.height / 2);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let at = |dx: usize, dy: usize| p.data[(2 * y + dy) * p.width + 2 * x + dx];
            out.push((at(0, 0) + at(1, 0) + at(0, 1) + at(1, 1)) / 4.0);
        }
    }
    Plane::new(w, h, out)
}

fn check_planes(x: &Plane, y: &Plane, min: usize) -> Result<(), MetricError> {
    if x.width != y.width || x.height != y.height {
        return Err(MetricError::SizeMismatch(
            format!("{}x{}", x.width, x.height),
            format!("{}x{}", y.width, y.height),
        ));
    }
    if x.width < min || x.height < min {
        return Err(MetricError::TooSmall { min, width: x.width, height: x.height });
    }
    Ok(())
}

/// Single-scale SSIM of two planes with samples in [0, 255].
pub fn ssim(x: &Plane, y: &Plane) -> Result<f64, MetricError> {
    check_planes(x, y, WINDOW)?;
    Ok(ssim_terms(x, y).0)
}

/// Five-scale MS-SSIM. Negative contrast-structure terms count as zero.
pub fn msssim(x: &Plane, y: &Plane) -> Result<f64, MetricError> {
    check_planes(x, y, MSSSIM_MIN_SIZE)?;
    let (mut a, mut b) = (x.clone(), y.clone());
    let mut value = 1.0;
    for (scale, &weight) in MSSSIM_WEIGHTS.iter().enumerate() {
        let (ssim, cs) = ssim_terms(&a, &b);
        if scale + 1 == MSSSIM_WEIGHTS.len() {
            value *= ssim.max(0.0).powf(weight);
        } else {
            value *= cs.max(0.0).powf(weight);
            a = downsample(&a);
            b = downsample(&b);
        }
    }
    Ok(value)
}

pub fn luma(img: &RgbImage) -> Plane {
    rgb_to_ycbcr(img).y
}

/// Metrics of one reconstruction against its original.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quality {
    pub mse: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    /// Absent when the image is too small for five scales.
    pub msssim: Option<f64>,
}

pub fn quality(original: &RgbImage, recon: &RgbImage) -> Result<Quality, MetricError> {
    let mse = image_mse(original, recon)?;
    let (lx, ly) = (luma(original), luma(recon));
    let ssim = if lx.width >= WINDOW && lx.height >= WINDOW { ssim(&lx, &ly)? } else { f64::NAN };
    let msssim = match msssim(&lx, &ly) {
        Ok(v) => Some(v),
        Err(MetricError::TooSmall { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(Quality { mse, psnr_db: psnr_from_mse(mse), ssim, msssim })
}
