//! Per-block sparse edit scores: a stride-8 convolutional stem yields one
//! 128-channel site per 8×8 block, split into luma and chroma maps that a
//! sparse multiplicative RNN refines and k-winners-take-all sparsifies.
//!
//! Matrices are stored input-major so that a batch of row vectors is
//! multiplied on the right: `Wf [n_in, h]`, `Vf [h, h]`, `Vz [h, h]`,
//! `Wz [n_in, h]`, `U [h, n_in]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{kwta_mask, AutodiffError, Graph, Tensor, TensorMap, Var};
use crate::codec::jfif::ZIGZAG;

/// (name, input channels, output channels, kernel, stride)
pub const STEM_LAYERS: [(&str, usize, usize, usize, usize); 4] = [
    ("conv1", 3, 32, 3, 2),
    ("conv2", 32, 64, 3, 2),
    ("conv3", 64, 256, 3, 2),
    ("reduce", 256, 128, 1, 1),
];

pub const SITE_CHANNELS: usize = 128;
pub const BLOCK_LEN: usize = 64;
pub const SMRNN_NAMES: [&str; 5] = ["Wf", "Vf", "Vz", "Wz", "U"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EditConfig {
    pub hidden: usize,
    pub k: usize,
    pub steps: usize,
}

impl Default for EditConfig {
    fn default() -> Self {
        Self { hidden: 64, k: 32, steps: 3 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConvVars {
    pub weight: Var,
    pub bias: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct StemVars {
    pub layers: [ConvVars; 4],
}

#[derive(Debug, Clone, Copy)]
pub struct SmrnnVars {
    pub wf: Var,
    pub vf: Var,
    pub vz: Var,
    pub wz: Var,
    pub u: Var,
}

/// Sparse edit scores, one row of 64 per block.
#[derive(Debug, Clone, Copy)]
pub struct EditScores {
    pub luma: Var,
    pub chroma: Var,
}

pub fn stem_param_names() -> Vec<String> {
    STEM_LAYERS
        .iter()
        .flat_map(|(n, ..)| [format!("stem.{n}.weight"), format!("stem.{n}.bias")])
        .collect()
}

pub fn smrnn_param_name(short: &str) -> String {
    format!("smrnn.{short}")
}

fn missing(name: &str) -> AutodiffError {
    AutodiffError::InvalidArgument { op: "bind", reason: format!("missing parameter {name}") }
}

impl StemVars {
    /// Looks the stem parameters up by name among bound variables.
    pub fn bind(lookup: impl Fn(&str) -> Option<Var>) -> Result<Self, AutodiffError> {
        let mut layers = Vec::with_capacity(4);
        for (n, ..) in STEM_LAYERS {
            let w = format!("stem.{n}.weight");
            let b = format!("stem.{n}.bias");
            layers.push(ConvVars {
                weight: lookup(&w).ok_or_else(|| missing(&w))?,
                bias: lookup(&b).ok_or_else(|| missing(&b))?,
            });
        }
        Ok(Self { layers: layers.try_into().expect("four layers") })
    }
}

impl SmrnnVars {
    pub fn bind(lookup: impl Fn(&str) -> Option<Var>) -> Result<Self, AutodiffError> {
        let get = |s: &str| {
            let name = smrnn_param_name(s);
            lookup(&name).ok_or_else(|| missing(&name))
        };
        Ok(Self { wf: get("Wf")?, vf: get("Vf")?, vz: get("Vz")?, wz: get("Wz")?, u: get("U")? })
    }
}

/// Stem activations `[B, 128, H/8, W/8]` of an NCHW batch scaled to [0, 1].
/// Height and width must be multiples of 8.
pub fn stem_features(g: &mut Graph, x: Var, stem: &StemVars) -> Result<Var, AutodiffError> {
    let shape = g.shape(x).to_vec();
    if shape.len() != 4 || shape[2] % 8 != 0 || shape[3] % 8 != 0 {
        return Err(AutodiffError::InvalidArgument {
            op: "stem",
            reason: format!("input {shape:?} is not an NCHW batch padded to 8×8 blocks"),
        });
    }
    let mut h = x;
    for (i, (layer, (_, _, _, kernel, stride))) in stem.layers.iter().zip(STEM_LAYERS).enumerate() {
        h = g.conv2d(h, layer.weight, Some(layer.bias), stride, kernel / 2)?;
        h = if i < 3 { g.tanh(h) } else { g.sigmoid(h) };
    }
    Ok(h)
}

/// Rearranges `[B, C, h, w]` features into `[B·h·w, C]`, one row per block in
/// raster order within each image.
pub fn feature_sites(g: &mut Graph, features: Var) -> Result<Var, AutodiffError> {
    let s = g.shape(features).to_vec();
    let p = g.permute(features, &[0, 2, 3, 1])?;
    g.reshape(p, &[s[0] * s[2] * s[3], s[1]])
}

/// Splits 128-channel sites into the luma and chroma 8×8 maps.
pub fn split_maps(g: &mut Graph, sites: Var) -> Result<(Var, Var), AutodiffError> {
    Ok((g.narrow(sites, 1, 0, BLOCK_LEN)?, g.narrow(sites, 1, BLOCK_LEN, BLOCK_LEN)?))
}

/// Iterates `f = (H·Wf) ⊙ (z·Vf)`, `z = tanh(f·Vz + H·Wz)` for `steps`
/// steps from `z0`, for every row of `h` at once.
pub fn smrnn_refine(g: &mut Graph, h: Var, z0: Var, p: &SmrnnVars, steps: usize) -> Result<Var, AutodiffError> {
    if steps == 0 {
        return Ok(z0);
    }
    let gate = g.matmul(h, p.wf)?;
    let drive = g.matmul(h, p.wz)?;
    let mut z = z0;
    for _ in 0..steps {
        let zf = g.matmul(z, p.vf)?;
        let f = g.mul(gate, zf)?;
        let fz = g.matmul(f, p.vz)?;
        let pre = g.add(fz, drive)?;
        z = g.tanh(pre);
    }
    Ok(z)
}

/// `kWTA(z_K · U, k)` starting from a zero hidden state.
pub fn edit_branch(g: &mut Graph, h: Var, p: &SmrnnVars, cfg: &EditConfig) -> Result<Var, AutodiffError> {
    let rows = g.shape(h)[0];
    let hidden = g.shape(p.u)[0];
    let z0 = g.constant(Tensor::zeros(&[rows, hidden]));
    let z = smrnn_refine(g, h, z0, p, cfg.steps)?;
    let scores = g.matmul(z, p.u)?;
    g.kwta(scores, cfg.k)
}

/// The luma and chroma branches run independently on their own maps.
pub fn edit_scores(g: &mut Graph, h_l: Var, h_c: Var, p: &SmrnnVars, cfg: &EditConfig) -> Result<EditScores, AutodiffError> {
    Ok(EditScores { luma: edit_branch(g, h_l, p, cfg)?, chroma: edit_branch(g, h_c, p, cfg)? })
}

/// k-winners-take-all on a plain vector.
pub fn kwta(v: &[f64], k: usize) -> Vec<f64> {
    kwta_mask(v, v.len(), k).iter().zip(v).map(|(&m, &x)| if m { x } else { 0.0 }).collect()
}

fn uniform(rng: &mut impl Rng, shape: &[usize], center: f64, half_width: f64) -> Tensor {
    Tensor::from_fn(shape, |_| center + rng.gen_range(-half_width..=half_width))
}

/// Fresh stem and SM-RNN parameters.
///
/// The stem uses Glorot-uniform kernels and zero biases, with a damped
/// channel reduction so the initial maps sit near 0.5. The SM-RNN input
/// drive has a positive mean and `U` carries a mild low-frequency
/// preference, so the first edit maps keep the lower half of the zigzag
/// spectrum at a gain close to one instead of zeroing whole blocks.
pub fn init_edit_params(cfg: &EditConfig, rng: &mut impl Rng) -> TensorMap {
    let mut p = TensorMap::new();
    for (name, cin, cout, k, _) in STEM_LAYERS {
        let fan = ((cin + cout) * k * k) as f64;
        let damp = if name == "reduce" { 0.5 } else { 1.0 };
        p.insert(format!("stem.{name}.weight"), uniform(rng, &[cout, cin, k, k], 0.0, damp * (6.0 / fan).sqrt()));
        p.insert(format!("stem.{name}.bias"), Tensor::zeros(&[cout]));
    }
    let (n, h) = (BLOCK_LEN, cfg.hidden);
    p.insert(smrnn_param_name("Wf"), uniform(rng, &[n, h], 0.0, 1.0 / (n as f64).sqrt()));
    p.insert(smrnn_param_name("Vf"), uniform(rng, &[h, h], 0.0, 1.0 / (h as f64).sqrt()));
    p.insert(smrnn_param_name("Vz"), uniform(rng, &[h, h], 0.0, 1.0 / (h as f64).sqrt()));
    p.insert(smrnn_param_name("Wz"), uniform(rng, &[n, h], 2.0 / n as f64, 4.0 / n as f64));
    let mut rank = [0usize; 64];
    for (r, &i) in ZIGZAG.iter().enumerate() {
        rank[i] = r;
    }
    // tanh(1) is the typical hidden activation under the drive above
    let gain = 1.0 / (h as f64 * 1f64.tanh());
    let u = Tensor::from_fn(&[h, n], |idx| {
        let prior = 1.0 - 0.25 * rank[idx % n] as f64 / 63.0;
        prior * gain + rng.gen_range(-0.01..=0.01) * gain
    });
    p.insert(smrnn_param_name("U"), u);
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bind_all(g: &mut Graph, params: &TensorMap) -> std::collections::BTreeMap<String, Var> {
        params.iter().map(|(k, v)| (k.clone(), g.param(v.clone()))).collect()
    }

    #[test]
    fn zero_stem_gives_half_maps() {
        let mut params = init_edit_params(&EditConfig::default(), &mut ChaCha8Rng::seed_from_u64(1));
        for name in stem_param_names() {
            let t = params.get_mut(&name).unwrap();
            t.data_mut().fill(0.0);
        }
        let mut g = Graph::new();
        let vars = bind_all(&mut g, &params);
        let stem = StemVars::bind(|n| vars.get(n).copied()).unwrap();
        let x = g.constant(Tensor::from_fn(&[1, 3, 16, 16], |i| (i % 7) as f64 / 7.0));
        let f = stem_features(&mut g, x, &stem).unwrap();
        assert_eq!(g.shape(f), &[1, 128, 2, 2]);
        let sites = feature_sites(&mut g, f).unwrap();
        let (hl, hc) = split_maps(&mut g, sites).unwrap();
        assert_eq!(g.shape(hl), &[4, 64]);
        assert!(g.value(hl).data().iter().chain(g.value(hc).data()).all(|&v| v == 0.5));
    }

    #[test]
    fn scalar_recurrence_by_hand() {
        let mut g = Graph::new();
        let one = |g: &mut Graph| g.constant(Tensor::ones(&[1, 1]));
        let p = SmrnnVars {
            wf: one(&mut g),
            vf: one(&mut g),
            vz: one(&mut g),
            wz: g.constant(Tensor::zeros(&[1, 1])),
            u: one(&mut g),
        };
        let h = g.constant(Tensor::full(&[1, 1], 0.5));
        let z0 = one(&mut g);
        let z1 = smrnn_refine(&mut g, h, z0, &p, 1).unwrap();
        assert!((g.value(z1).data()[0] - 0.5f64.tanh()).abs() < 1e-15);
        assert_eq!(smrnn_refine(&mut g, h, z0, &p, 0).unwrap(), z0);
    }

    #[test]
    fn kwta_examples() {
        assert_eq!(kwta(&[0.1, 0.9, 0.5, 0.3], 2), vec![0.0, 0.9, 0.5, 0.0]);
        assert_eq!(kwta(&[0.0; 6], 3), vec![0.0; 6]);
    }

    #[test]
    fn fresh_init_keeps_low_frequencies() {
        let cfg = EditConfig::default();
        let params = init_edit_params(&cfg, &mut ChaCha8Rng::seed_from_u64(9));
        let mut g = Graph::new();
        let vars = bind_all(&mut g, &params);
        let p = SmrnnVars::bind(|n| vars.get(n).copied()).unwrap();
        let h = g.constant(Tensor::from_fn(&[4, 64], |i| 0.45 + 0.1 * ((i * 37 % 11) as f64 / 11.0)));
        let c = edit_branch(&mut g, h, &p, &cfg).unwrap();
        for row in g.value(c).data().chunks(64) {
            assert!(row[0] > 0.7 && row[0] < 1.3, "DC gain {}", row[0]);
            assert_eq!(row.iter().filter(|v| **v != 0.0).count(), 32);
            assert_eq!(row[63], 0.0);
        }
    }
}
