//! Seeded synthetic photographs: smooth illumination, a few hard-edged
//! objects, a striped texture and sensor-like noise. Useful wherever a
//! natural test image is needed but no corpus is at hand.

use crate::codec::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Disk {
    cx: f64,
    cy: f64,
    r: f64,
    color: [f64; 3],
}

pub fn natural_image(width: usize, height: usize, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);
    let base: [f64; 3] = std::array::from_fn(|_| rng.gen_range(70.0..170.0));
    let tilt: [(f64, f64); 3] = std::array::from_fn(|_| (rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)));
    let wave_f = (rng.gen_range(1.0..3.0), rng.gen_range(1.0..3.0));
    let disks: Vec<Disk> = (0..rng.gen_range(3..7))
        .map(|_| Disk {
            cx: rng.gen_range(0.0..w),
            cy: rng.gen_range(0.0..h),
            r: rng.gen_range(0.06..0.25) * w.min(h),
            color: std::array::from_fn(|_| rng.gen_range(20.0..235.0)),
        })
        .collect();
    // striped texture patch
    let (tx, ty) = (rng.gen_range(0.0..w * 0.6), rng.gen_range(0.0..h * 0.6));
    let (tw, th) = (w * 0.35, h * 0.35);
    let period = rng.gen_range(3.0..9.0);
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    let noise_amp = 4.0;

    let mut data = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            let (fx, fy) = (x as f64 / w, y as f64 / h);
            let shade = 18.0
                * (2.0 * std::f64::consts::PI * (wave_f.0 * fx + 0.3)).sin()
                * (2.0 * std::f64::consts::PI * (wave_f.1 * fy + 0.1)).cos();
            let mut px: [f64; 3] = std::array::from_fn(|c| base[c] + tilt[c].0 * (fx - 0.5) + tilt[c].1 * (fy - 0.5) + shade);
            for d in &disks {
                let dist = ((x as f64 - d.cx).powi(2) + (y as f64 - d.cy).powi(2)).sqrt();
                if dist < d.r {
                    // slight radial shading inside each object
                    let k = 1.0 - 0.25 * dist / d.r;
                    px = std::array::from_fn(|c| d.color[c] * k + 0.15 * px[c]);
                }
            }
            let (xf, yf) = (x as f64, y as f64);
            if xf >= tx && xf < tx + tw && yf >= ty && yf < ty + th {
                let t = (xf * angle.cos() + yf * angle.sin()) * 2.0 * std::f64::consts::PI / period;
                let stripe = 30.0 * t.sin();
                px = px.map(|v| v + stripe);
            }
            for v in px.iter_mut() {
                *v += rng.gen_range(-noise_amp..noise_amp);
            }
            data.extend(px.map(|v| v.round().clamp(0.0, 255.0) as u8));
        }
    }
    RgbImage::new(width, height, data).expect("dimensions are non-zero")
}
