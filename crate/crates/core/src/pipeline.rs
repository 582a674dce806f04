//! Differentiable twin of the baseline codec.
//!
//! The learnable table parameter `P` holds scaled quantizer step sizes in
//! `[s, 255·s]`. The quantizer multiplies by the reciprocal `Q̄ = s / P`,
//! dequantization multiplies by `P / s`, and exported integer tables are
//! `round(P / s)`. Forward order per block: DCT coefficients `F`, edit
//! weighting `F ⊙ c ⊙ Q̄`, soft rounding, dequantization, inverse DCT,
//! decoder post-edit `(1 + c_dec)` on level-shifted samples, colour
//! conversion.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Graph, SoftRoundSign, Tensor, TensorMap, Var};
use crate::codec::dct::idct_basis;
use crate::codec::jfif::{MAX_AC, MAX_COEFFICIENT};
use crate::codec::{
    entropy_encode, forward_coefficients, sample_to_byte, Channel, CodecError, CoefficientGrid, JfifBitstream,
    QuantTable, QuantTablePair, RgbImage,
};
use crate::edit::{self, EditConfig, EditScores, SmrnnVars, StemVars};

pub const QTABLE_LUMA: &str = "qtable.luma";
pub const QTABLE_CHROMA: &str = "qtable.chroma";
/// Scale applied to dequantized coefficients before the decoder SM-RNN.
pub const DECODER_INPUT_SCALE: f64 = 1.0 / 1024.0;
const DC_RANGE: (i32, i32) = (-1024, 1023);

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("table scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("batch images differ in size: {0}x{1} vs {2}x{3}")]
    MixedDimensions(usize, usize, usize, usize),
    #[error("parameter {name} has shape {shape:?}, expected {expected:?}")]
    ParamShape { name: String, shape: Vec<usize>, expected: Vec<usize> },
    #[error("missing parameter {0}")]
    MissingParam(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Table scale `s`.
    pub scale: f64,
    pub edit: EditConfig,
    /// Training default is `Positive`: the `Negative` cubic has a
    /// non-positive derivative everywhere, which drives the edit scores to
    /// zero within a few steps.
    pub soft_round: SoftRoundSign,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { scale: 1e-3, edit: EditConfig::default(), soft_round: SoftRoundSign::Positive }
    }
}

fn check_scale(s: f64) -> Result<(), PipelineError> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(PipelineError::InvalidScale(s))
    }
}

/// Luma and chroma table parameters, 64 entries each i.i.d. on `[s, 2s]`.
pub fn init_qtables(s: f64, rng: &mut impl Rng) -> Result<(Tensor, Tensor), PipelineError> {
    check_scale(s)?;
    let mut table = || Tensor::from_fn(&[8, 8], |_| rng.gen_range(s..=2.0 * s));
    let luma = table();
    Ok((luma, table()))
}

pub fn export_table(p: &Tensor, s: f64) -> QuantTable {
    let values: [u8; 64] = std::array::from_fn(|i| (p.data()[i] / s).round().clamp(1.0, 255.0) as u8);
    QuantTable::new(values).expect("entries clamped to [1, 255]")
}

/// Integer tables `clamp(round(P / s), 1, 255)`.
pub fn export_qtables(luma: &Tensor, chroma: &Tensor, s: f64) -> QuantTablePair {
    QuantTablePair { luma: export_table(luma, s), chroma: export_table(chroma, s) }
}

/// The parameter that exports to `table`.
pub fn table_param(table: &QuantTable, s: f64) -> Tensor {
    Tensor::new(vec![8, 8], table.values().iter().map(|&v| v as f64 * s).collect()).expect("64 entries")
}

pub fn clamp_table_param(p: &mut Tensor, s: f64) {
    for v in p.data_mut() {
        *v = v.clamp(s, 255.0 * s);
    }
}

/// All trainable parameters with the configuration that shapes them.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: PipelineConfig,
    pub params: TensorMap,
}

impl Model {
    pub fn init(config: PipelineConfig, seed: u64) -> Result<Self, PipelineError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = edit::init_edit_params(&config.edit, &mut rng);
        let (l, c) = init_qtables(config.scale, &mut rng)?;
        params.insert(QTABLE_LUMA.into(), l);
        params.insert(QTABLE_CHROMA.into(), c);
        Ok(Self { config, params })
    }

    pub fn from_params(config: PipelineConfig, params: TensorMap) -> Result<Self, PipelineError> {
        check_scale(config.scale)?;
        let h = config.edit.hidden;
        let mut expected: Vec<(String, Vec<usize>)> = edit::STEM_LAYERS
            .iter()
            .flat_map(|&(n, cin, cout, k, _)| {
                [(format!("stem.{n}.weight"), vec![cout, cin, k, k]), (format!("stem.{n}.bias"), vec![cout])]
            })
            .collect();
        for (n, shape) in [("Wf", [64, h]), ("Vf", [h, h]), ("Vz", [h, h]), ("Wz", [64, h]), ("U", [h, 64])] {
            expected.push((edit::smrnn_param_name(n), shape.to_vec()));
        }
        expected.push((QTABLE_LUMA.into(), vec![8, 8]));
        expected.push((QTABLE_CHROMA.into(), vec![8, 8]));
        for (name, shape) in expected {
            let t = params.get(&name).ok_or_else(|| PipelineError::MissingParam(name.clone()))?;
            if t.shape() != shape.as_slice() {
                return Err(PipelineError::ParamShape { name, shape: t.shape().to_vec(), expected: shape });
            }
        }
        Ok(Self { config, params })
    }

    pub fn qtables(&self) -> QuantTablePair {
        export_qtables(&self.params[QTABLE_LUMA], &self.params[QTABLE_CHROMA], self.config.scale)
    }

    /// Sets the tables so that they export to `tables` exactly.
    pub fn set_qtables(&mut self, tables: &QuantTablePair) {
        let s = self.config.scale;
        self.params.insert(QTABLE_LUMA.into(), table_param(&tables.luma, s));
        self.params.insert(QTABLE_CHROMA.into(), table_param(&tables.chroma, s));
    }

    pub fn clamp_qtables(&mut self) {
        let s = self.config.scale;
        for name in [QTABLE_LUMA, QTABLE_CHROMA] {
            if let Some(p) = self.params.get_mut(name) {
                clamp_table_param(p, s);
            }
        }
    }

    /// Puts every parameter on the graph, as trainable leaves or constants.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> ParamVars {
        self.params.iter().map(|(k, v)| (k.clone(), g.leaf(v.clone(), trainable))).collect()
    }
}

pub type ParamVars = BTreeMap<String, Var>;

/// Images of equal size prepared for the graph: padded RGB and the DCT
/// coefficients of each channel, one row of 64 per block.
#[derive(Debug, Clone)]
pub struct Batch {
    pub len: usize,
    pub width: usize,
    pub height: usize,
    pub blocks_wide: usize,
    pub blocks_high: usize,
    /// `[B, 3, 8·blocks_high, 8·blocks_wide]`, samples in [0, 255].
    pub rgb: Tensor,
    /// Unpadded `[B, 3, height, width]`.
    pub original: Tensor,
    pub coeffs: [Tensor; 3],
}

fn nchw(images: &[&RgbImage]) -> Tensor {
    let (w, h) = (images[0].width(), images[0].height());
    let mut data = Vec::with_capacity(images.len() * 3 * w * h);
    for img in images {
        for c in 0..3 {
            data.extend(img.data().iter().skip(c).step_by(3).map(|&v| v as f64));
        }
    }
    Tensor::new(vec![images.len(), 3, h, w], data).expect("consistent sizes")
}

impl Batch {
    pub fn new(images: &[RgbImage]) -> Result<Self, PipelineError> {
        let first = images.first().ok_or(PipelineError::EmptyBatch)?;
        let (w, h) = (first.width(), first.height());
        if let Some(o) = images.iter().find(|i| i.width() != w || i.height() != h) {
            return Err(PipelineError::MixedDimensions(w, h, o.width(), o.height()));
        }
        let (bw, bh) = (w.div_ceil(8), h.div_ceil(8));
        let padded: Vec<RgbImage> = images.iter().map(|i| i.pad_replicate(bw * 8, bh * 8)).collect();
        let mut coeffs: [Vec<f64>; 3] = Default::default();
        for img in images {
            for (dst, grid) in coeffs.iter_mut().zip(forward_coefficients(img)) {
                dst.extend(grid.blocks.iter().flatten());
            }
        }
        let rows = images.len() * bw * bh;
        Ok(Self {
            len: images.len(),
            width: w,
            height: h,
            blocks_wide: bw,
            blocks_high: bh,
            rgb: nchw(&padded.iter().collect::<Vec<_>>()),
            original: nchw(&images.iter().collect::<Vec<_>>()),
            coeffs: coeffs.map(|c| Tensor::new(vec![rows, 64], c).expect("64 per block")),
        })
    }

    pub fn rows(&self) -> usize {
        self.len * self.blocks_wide * self.blocks_high
    }

    pub fn is_padded(&self) -> bool {
        self.blocks_wide * 8 != self.width || self.blocks_high * 8 != self.height
    }
}

/// Graph nodes produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardOutput {
    /// `[B, 3, height, width]`, samples in [0, 255].
    pub recon: Var,
    /// Soft-rounded coefficients of Y, Cb, Cr, `[rows, 64]` each.
    pub zhat: [Var; 3],
    pub scores: EditScores,
    /// Reciprocal multipliers `Q̄ = s / P`, `[1, 64]`, luma then chroma.
    pub qbar: [Var; 2],
    /// Step sizes `P / s`, `[1, 64]`.
    pub steps: [Var; 2],
}

fn lookup<'a>(vars: &'a ParamVars) -> impl Fn(&str) -> Option<Var> + 'a {
    |n| vars.get(n).copied()
}

fn tile(g: &mut Graph, row: Var, rows: usize) -> Result<Var, AutodiffError> {
    let ones = g.constant(Tensor::ones(&[rows, 1]));
    g.matmul(ones, row)
}

/// Step sizes and reciprocal multipliers of both tables.
pub fn table_vars(g: &mut Graph, vars: &ParamVars, s: f64) -> Result<([Var; 2], [Var; 2]), PipelineError> {
    let mut steps = Vec::with_capacity(2);
    let mut qbar = Vec::with_capacity(2);
    for name in [QTABLE_LUMA, QTABLE_CHROMA] {
        let p = *vars.get(name).ok_or_else(|| PipelineError::MissingParam(name.into()))?;
        let p = g.reshape(p, &[1, 64])?;
        let q = g.scalar_mul(p, 1.0 / s);
        qbar.push(g.reciprocal(q));
        steps.push(q);
    }
    Ok(([steps[0], steps[1]], [qbar[0], qbar[1]]))
}

/// Edit scores of a batch from its padded RGB pixels.
pub fn batch_edit_scores(
    g: &mut Graph,
    batch: &Batch,
    vars: &ParamVars,
    cfg: &EditConfig,
) -> Result<EditScores, PipelineError> {
    let stem = StemVars::bind(lookup(vars))?;
    let smrnn = SmrnnVars::bind(lookup(vars))?;
    let x = g.constant(batch.rgb.clone());
    let x = g.scalar_mul(x, 1.0 / 255.0);
    let feats = edit::stem_features(g, x, &stem)?;
    let sites = edit::feature_sites(g, feats)?;
    let (hl, hc) = edit::split_maps(g, sites)?;
    Ok(edit::edit_scores(g, hl, hc, &smrnn, cfg)?)
}

/// `soft_round(F ⊙ c ⊙ Q̄)` for one channel.
pub fn neural_encode_channel(
    g: &mut Graph,
    coeffs: Var,
    scores: Var,
    qbar: Var,
    sign: SoftRoundSign,
) -> Result<Var, AutodiffError> {
    let rows = g.shape(coeffs)[0];
    let q = tile(g, qbar, rows)?;
    let weighted = g.mul(coeffs, scores)?;
    let x = g.mul(weighted, q)?;
    Ok(g.soft_round(x, sign))
}

/// Block layout of the planes being decoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub images: usize,
    pub blocks_wide: usize,
    pub blocks_high: usize,
    pub width: usize,
    pub height: usize,
}

impl Layout {
    pub fn of(batch: &Batch) -> Self {
        Self {
            images: batch.len,
            blocks_wide: batch.blocks_wide,
            blocks_high: batch.blocks_high,
            width: batch.width,
            height: batch.height,
        }
    }
}

/// `[images·bh·bw, 64]` block rows to `[images, 1, 8·bh, 8·bw]` planes.
fn assemble(g: &mut Graph, rows: Var, l: &Layout) -> Result<Var, AutodiffError> {
    let r = g.reshape(rows, &[l.images, l.blocks_high, l.blocks_wide, 8, 8])?;
    let p = g.permute(r, &[0, 1, 3, 2, 4])?;
    g.reshape(p, &[l.images, 1, l.blocks_high * 8, l.blocks_wide * 8])
}

/// Dequantization, inverse DCT, optional decoder post-edit and colour
/// conversion back to `[images, 3, height, width]` RGB in [0, 255].
/// Without a decoder network the post-edit is the identity.
pub fn neural_decode(
    g: &mut Graph,
    zhat: [Var; 3],
    steps: [Var; 2],
    decoder: Option<(&SmrnnVars, &EditConfig)>,
    layout: &Layout,
) -> Result<Var, AutodiffError> {
    let basis = g.constant(Tensor::new(vec![64, 64], idct_basis().to_vec())?);
    let mut planes = Vec::with_capacity(3);
    for (ch, z) in zhat.into_iter().enumerate() {
        let rows = g.shape(z)[0];
        let q = tile(g, steps[usize::from(ch > 0)], rows)?;
        let deq = g.mul(z, q)?;
        let mut pix = g.matmul(deq, basis)?;
        if let Some((smrnn, cfg)) = decoder {
            let h = g.scalar_mul(deq, DECODER_INPUT_SCALE);
            let c = edit::edit_branch(g, h, smrnn, cfg)?;
            let delta = g.mul(pix, c)?;
            pix = g.add(pix, delta)?;
        }
        let samples = g.add_scalar(pix, 128.0);
        planes.push(assemble(g, samples, layout)?);
    }
    let (y, cb, cr) = (planes[0], g.add_scalar(planes[1], -128.0), g.add_scalar(planes[2], -128.0));
    let r_cr = g.scalar_mul(cr, 1.402);
    let r = g.add(y, r_cr)?;
    let g_cb = g.scalar_mul(cb, 0.344_136_286_201_022_1);
    let g_cr = g.scalar_mul(cr, 0.714_136_286_201_022_1);
    let gy = g.sub(y, g_cb)?;
    let gr = g.sub(gy, g_cr)?;
    let b_cb = g.scalar_mul(cb, 1.772);
    let b = g.add(y, b_cb)?;
    let rgb = g.concat(&[r, gr, b], 1)?;
    let mut out = g.clamp(rgb, 0.0, 255.0)?;
    if layout.height != layout.blocks_high * 8 {
        out = g.narrow(out, 2, 0, layout.height)?;
    }
    if layout.width != layout.blocks_wide * 8 {
        out = g.narrow(out, 3, 0, layout.width)?;
    }
    Ok(out)
}

/// Full differentiable encode/decode of a batch with the parameters in `vars`.
pub fn forward(
    g: &mut Graph,
    batch: &Batch,
    vars: &ParamVars,
    cfg: &PipelineConfig,
) -> Result<ForwardOutput, PipelineError> {
    check_scale(cfg.scale)?;
    let scores = batch_edit_scores(g, batch, vars, &cfg.edit)?;
    let (steps, qbar) = table_vars(g, vars, cfg.scale)?;
    let mut zhat = Vec::with_capacity(3);
    for (ch, coeffs) in batch.coeffs.iter().enumerate() {
        let f = g.constant(coeffs.clone());
        let (c, q) = if ch == 0 { (scores.luma, qbar[0]) } else { (scores.chroma, qbar[1]) };
        zhat.push(neural_encode_channel(g, f, c, q, cfg.soft_round)?);
    }
    let zhat = [zhat[0], zhat[1], zhat[2]];
    let smrnn = SmrnnVars::bind(lookup(vars))?;
    let recon = neural_decode(g, zhat, steps, Some((&smrnn, &cfg.edit)), &Layout::of(batch))?;
    Ok(ForwardOutput { recon, zhat, scores, qbar, steps })
}

/// `round(F · c / T)` per coefficient, clamped to what baseline Huffman
/// tables can code.
pub fn quantize_edited(coeffs: &CoefficientGrid<f64>, scores: &[f64], table: &QuantTable) -> CoefficientGrid<i32> {
    let mut out = CoefficientGrid::zeros(coeffs.channel, coeffs.width, coeffs.height);
    for (b, (src, dst)) in coeffs.blocks.iter().zip(out.blocks.iter_mut()).enumerate() {
        let c = &scores[b * 64..(b + 1) * 64];
        for i in 0..64 {
            let v = (src[i] * c[i] / table.get(i) as f64).round();
            let (lo, hi) = if i == 0 { DC_RANGE } else { (-MAX_AC, MAX_AC) };
            dst[i] = (v.clamp(lo as f64, hi as f64) as i32).clamp(-MAX_COEFFICIENT, MAX_COEFFICIENT);
        }
    }
    out
}

/// Hard-rounded result of the learned encoder for one image.
#[derive(Debug, Clone)]
pub struct NeuralEncoding {
    pub grids: [CoefficientGrid<i32>; 3],
    pub tables: QuantTablePair,
    pub bitstream: JfifBitstream,
}

impl NeuralEncoding {
    pub fn bpp(&self) -> f64 {
        self.bitstream.bpp(self.grids[0].width, self.grids[0].height)
    }
}

/// Edit scores evaluated without gradients, luma then chroma.
pub fn edit_scores_for(model: &Model, batch: &Batch) -> Result<[Tensor; 2], PipelineError> {
    let mut g = Graph::new();
    let vars = model.bind(&mut g, false);
    let s = batch_edit_scores(&mut g, batch, &vars, &model.config.edit)?;
    Ok([g.value(s.luma).clone(), g.value(s.chroma).clone()])
}

/// Runs the learned encoder, quantizes with the exported integer tables
/// and writes a baseline bitstream.
pub fn neural_encode(model: &Model, img: &RgbImage) -> Result<NeuralEncoding, PipelineError> {
    let batch = Batch::new(std::slice::from_ref(img))?;
    let [cl, cc] = edit_scores_for(model, &batch)?;
    let tables = model.qtables();
    let coeffs = forward_coefficients(img);
    let grids = coeffs.each_ref().map(|grid| {
        let scores = if grid.channel == Channel::Y { &cl } else { &cc };
        quantize_edited(grid, scores.data(), tables.for_luma(grid.channel.is_luma()))
    });
    let bitstream = entropy_encode(&grids, &tables)?;
    Ok(NeuralEncoding { grids, tables, bitstream })
}

fn grid_rows(grid: &CoefficientGrid<i32>) -> Tensor {
    let data = grid.blocks.iter().flatten().map(|&v| v as f64).collect();
    Tensor::new(vec![grid.block_count(), 64], data).expect("64 per block")
}

/// Reconstruction by the learned decoder, including its post-edit, from
/// integer coefficients and tables.
pub fn neural_decode_hard(
    model: &Model,
    grids: &[CoefficientGrid<i32>; 3],
    tables: &QuantTablePair,
) -> Result<RgbImage, PipelineError> {
    let mut g = Graph::new();
    let vars = model.bind(&mut g, false);
    let smrnn = SmrnnVars::bind(lookup(&vars))?;
    let zhat = grids.each_ref().map(|grid| g.constant(grid_rows(grid)));
    let steps = [&tables.luma, &tables.chroma].map(|t| {
        g.constant(Tensor::new(vec![1, 64], t.values().iter().map(|&v| v as f64).collect()).expect("64"))
    });
    let first = &grids[0];
    let layout = Layout {
        images: 1,
        blocks_wide: first.blocks_wide,
        blocks_high: first.blocks_high,
        width: first.width,
        height: first.height,
    };
    let out = neural_decode(&mut g, zhat, steps, Some((&smrnn, &model.config.edit)), &layout)?;
    Ok(tensor_to_image(g.value(out), 0))
}

/// Image `index` of an `[B, 3, H, W]` tensor, rounded to bytes.
pub fn tensor_to_image(t: &Tensor, index: usize) -> RgbImage {
    let s = t.shape();
    let (h, w) = (s[2], s[3]);
    let plane = h * w;
    let base = index * 3 * plane;
    let d = t.data();
    let data = (0..plane).flat_map(|p| (0..3).map(move |c| sample_to_byte(d[base + c * plane + p]))).collect();
    RgbImage::new(w, h, data).expect("non-empty image")
}

/// Bits per pixel of the baseline bitstream for integer coefficients.
pub fn measure_bpp(grids: &[CoefficientGrid<i32>; 3], tables: &QuantTablePair) -> Result<f64, PipelineError> {
    let stream = entropy_encode(grids, tables)?;
    Ok(stream.bpp(grids[0].width, grids[0].height))
}
