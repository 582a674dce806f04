//! BT.601 full-range colour conversion as used by JFIF.

use super::image::{sample_to_byte, Plane, RgbImage, YcbcrImage};

pub fn rgb_to_ycbcr_pixel([r, g, b]: [u8; 3]) -> [f64; 3] {
    let (r, g, b) = (r as f64, g as f64, b as f64);
    [
        0.299 * r + 0.587 * g + 0.114 * b,
        128.0 - 0.168_735_891_647_856_5 * r - 0.331_264_108_352_143_5 * g + 0.5 * b,
        128.0 + 0.5 * r - 0.418_687_589_158_345_2 * g - 0.081_312_410_841_654_8 * b,
    ]
}

pub fn ycbcr_to_rgb_pixel([y, cb, cr]: [f64; 3]) -> [f64; 3] {
    let cb = cb - 128.0;
    let cr = cr - 128.0;
    [
        y + 1.402 * cr,
        y - 0.344_136_286_201_022_1 * cb - 0.714_136_286_201_022_1 * cr,
        y + 1.772 * cb,
    ]
}

pub fn rgb_to_ycbcr(img: &RgbImage) -> YcbcrImage {
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    let mut planes = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    for px in img.data().chunks_exact(3) {
        let ycc = rgb_to_ycbcr_pixel([px[0], px[1], px[2]]);
        for (plane, v) in planes.iter_mut().zip(ycc) {
            plane.push(v);
        }
    }
    let [y, cb, cr] = planes;
    YcbcrImage {
        y: Plane::new(w, h, y),
        cb: Plane::new(w, h, cb),
        cr: Plane::new(w, h, cr),
    }
}

pub fn ycbcr_to_rgb(img: &YcbcrImage) -> RgbImage {
    let (w, h) = (img.width(), img.height());
    let mut data = Vec::with_capacity(w * h * 3);
    for i in 0..w * h {
        let rgb = ycbcr_to_rgb_pixel([img.y.data[i], img.cb.data[i], img.cr.data[i]]);
        data.extend(rgb.map(sample_to_byte));
    }
    RgbImage::new(w, h, data).expect("dimensions come from a valid YCbCr image")
}
