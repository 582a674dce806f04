use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TrainError;
use crate::codec::{decode_ppm, RgbImage};

/// `*.ppm` files of a directory in name order.
pub fn list_ppm(dir: &Path) -> Result<Vec<PathBuf>, TrainError> {
    let entries = std::fs::read_dir(dir).map_err(|e| TrainError::io(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("ppm")))
        .collect();
    files.sort();
    Ok(files)
}

pub fn read_ppm(path: &Path) -> Result<RgbImage, TrainError> {
    let bytes = std::fs::read(path).map_err(|e| TrainError::io(path, e))?;
    decode_ppm(&bytes).map_err(|e| TrainError::Image { path: path.to_path_buf(), source: e })
}

/// `count` uniformly placed `patch`×`patch` crops drawn from the PPM
/// images in `dir`. Unreadable or undersized files are skipped with a
/// warning.
pub fn load_patches(dir: &Path, patch: usize, count: usize, seed: u64) -> Result<Vec<RgbImage>, TrainError> {
    let mut sources = Vec::new();
    for path in list_ppm(dir)? {
        match read_ppm(&path) {
            Ok(img) if img.width() >= patch && img.height() >= patch => sources.push(img),
            Ok(img) => log::warn!(
                "skipping {}: {}x{} is smaller than the {patch}px patch",
                path.display(),
                img.width(),
                img.height()
            ),
            Err(e) => log::warn!("skipping {}: {e}", path.display()),
        }
    }
    if sources.is_empty() || count == 0 || patch == 0 {
        return Err(TrainError::NoPatches(dir.to_path_buf()));
    }
    Ok(crop_patches(&sources, patch, count, seed))
}

/// Seeded crops from in-memory images, all at least `patch` in size.
pub fn crop_patches(sources: &[RgbImage], patch: usize, count: usize, seed: u64) -> Vec<RgbImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let img = &sources[rng.gen_range(0..sources.len())];
            let x = rng.gen_range(0..=img.width() - patch);
            let y = rng.gen_range(0..=img.height() - patch);
            img.crop(x, y, patch, patch).expect("crop lies inside the image")
        })
        .collect()
}
