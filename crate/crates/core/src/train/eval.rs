use std::path::Path;

use super::data::{list_ppm, read_ppm};
use super::TrainError;
use crate::codec::{decode_baseline, encode_baseline, JfifBitstream, QuantTablePair, RgbImage};
use crate::metrics::{msssim_db, quality, Quality};
use crate::pipeline::{neural_decode_hard, neural_encode, Model};

pub const CSV_HEADER: [&str; 7] = ["image_id", "bpp", "psnr_db", "ssim", "msssim", "msssim_db", "mse"];

/// Quality of the reference JPEG row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BaselineQuality {
    /// The quality whose bitrate is closest to the learned codec's.
    #[default]
    Matched,
    Fixed(u8),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub image_id: String,
    pub bpp: f64,
    pub quality: Quality,
}

fn encode_at(img: &RgbImage, q: u8) -> Result<JfifBitstream, TrainError> {
    Ok(encode_baseline(img, &QuantTablePair::for_quality(q)?)?)
}

/// The standard-table quality whose bitrate is nearest `target_bpp`,
/// assuming bitrate grows with quality.
pub fn matched_quality(img: &RgbImage, target_bpp: f64) -> Result<(u8, JfifBitstream), TrainError> {
    let bpp = |s: &JfifBitstream| s.bpp(img.width(), img.height());
    let (mut lo, mut hi) = (1u8, 100u8);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if bpp(&encode_at(img, mid)?) < target_bpp {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    let upper = encode_at(img, lo)?;
    if lo > 1 {
        let lower = encode_at(img, lo - 1)?;
        if (bpp(&lower) - target_bpp).abs() <= (bpp(&upper) - target_bpp).abs() {
            return Ok((lo - 1, lower));
        }
    }
    Ok((lo, upper))
}

/// Learned codec and reference JPEG on every PPM image of `data`, two rows
/// per image, written to `csv_out`.
pub fn evaluate(model: &Model, data: &Path, csv_out: &Path, baseline: BaselineQuality) -> Result<Vec<EvalRow>, TrainError> {
    let mut rows = Vec::new();
    for path in list_ppm(data)? {
        let img = match read_ppm(&path) {
            Ok(img) => img,
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                continue;
            }
        };
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let enc = neural_encode(model, &img)?;
        let recon = neural_decode_hard(model, &enc.grids, &enc.tables)?;
        let bpp = enc.bpp();
        rows.push(EvalRow { image_id: format!("{name}:neural"), bpp, quality: quality(&img, &recon)? });

        let (q, stream) = match baseline {
            BaselineQuality::Matched => matched_quality(&img, bpp)?,
            BaselineQuality::Fixed(q) => (q, encode_at(&img, q)?),
        };
        let decoded = decode_baseline(stream.as_bytes())?;
        rows.push(EvalRow {
            image_id: format!("{name}:jpeg_q{q}"),
            bpp: stream.bpp(img.width(), img.height()),
            quality: quality(&img, &decoded)?,
        });
    }
    if rows.is_empty() {
        return Err(TrainError::NoPatches(data.to_path_buf()));
    }
    write_csv(csv_out, &rows)?;
    Ok(rows)
}

fn field(v: Option<f64>) -> String {
    v.filter(|x| x.is_finite()).map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn write_csv(path: &Path, rows: &[EvalRow]) -> Result<(), TrainError> {
    let csv_err = |e: csv::Error| TrainError::Csv(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        let q = &r.quality;
        w.write_record([
            r.image_id.clone(),
            format!("{:.6}", r.bpp),
            format!("{:.6}", q.psnr_db),
            field(Some(q.ssim)),
            field(q.msssim),
            field(q.msssim.map(msssim_db)),
            format!("{:.6}", q.mse),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| TrainError::io(path, e))
}
