//! Patch loading, Adam with polynomial decay, the training loop,
//! checkpoints and evaluation sweeps.

mod adam;
mod checkpoint;
mod data;
mod eval;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{poly_decay, Adam, AdamHyper};
pub use checkpoint::Checkpoint;
pub use data::{crop_patches, list_ppm, load_patches, read_ppm};
pub use eval::{evaluate, matched_quality, write_csv, BaselineQuality, EvalRow, CSV_HEADER};

use crate::autodiff::{AutodiffError, Graph, TensorMap};
use crate::codec::{CodecError, RgbImage};
use crate::edit::{self, StemVars};
use crate::losses::{self, LossConfig, LossError};
use crate::metrics::MetricError;
use crate::pipeline::{self, Batch, Model, PipelineConfig, PipelineError, QTABLE_CHROMA, QTABLE_LUMA};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: CodecError },
    #[error("no usable training images in {0}")]
    NoPatches(PathBuf),
    #[error("gradient of {0} is not finite")]
    NonFiniteGradient(String),
    #[error("gradient for unknown parameter {0}")]
    UnknownParam(String),
    #[error("gradient of {name} does not match the parameter shape")]
    GradientShape { name: String },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

impl TrainError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub patch_size: usize,
    pub batch_size: usize,
    /// Number of crops drawn from the data directory.
    pub patches: usize,
    pub steps: u64,
    pub lr_start: f64,
    pub lr_end: f64,
    pub decay_power: f64,
    pub seed: u64,
    pub loss: LossConfig,
    pub pipeline: PipelineConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            patch_size: 256,
            batch_size: 32,
            patches: 256,
            steps: 1000,
            lr_start: 1e-3,
            lr_end: 1e-8,
            decay_power: 1.0,
            seed: 0,
            loss: LossConfig::default(),
            pipeline: PipelineConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: String| Err(TrainError::Config(m));
        if self.patch_size == 0 || self.patch_size % 8 != 0 {
            return fail(format!("patch_size {} is not a positive multiple of 8", self.patch_size));
        }
        if self.batch_size == 0 || self.patches == 0 {
            return fail("batch_size and patches must be at least 1".into());
        }
        if !(self.lr_start > self.lr_end && self.lr_end > 0.0) {
            return fail(format!("need lr_start > lr_end > 0, got {} and {}", self.lr_start, self.lr_end));
        }
        if !(self.decay_power > 0.0) {
            return fail(format!("decay_power must be positive, got {}", self.decay_power));
        }
        if !(self.pipeline.scale > 0.0 && self.pipeline.scale.is_finite()) {
            return fail(format!("scale must be positive, got {}", self.pipeline.scale));
        }
        let e = &self.pipeline.edit;
        if e.hidden == 0 || e.k > 64 {
            return fail(format!("hidden must be positive and k at most 64, got {} and {}", e.hidden, e.k));
        }
        Ok(self.loss.validate()?)
    }

    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Loss components of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub step: u64,
    pub loss: f64,
    pub distortion: f64,
    pub rate: f64,
    pub alignment: f64,
    pub lr: f64,
}

impl fmt::Display for StepLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{:.9e},{:.9e},{:.9e},{:.9e},{:.6e}",
            self.step, self.loss, self.distortion, self.rate, self.alignment, self.lr
        )
    }
}

pub const LOG_HEADER: &str = "step,loss,d,r,al,lr";

/// Values of the loss terms and the gradient of the total for every
/// parameter.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub total: f64,
    pub distortion: f64,
    pub rate: f64,
    pub alignment: f64,
    pub grads: TensorMap,
}

/// One forward and backward pass over `images`, with samples scaled to
/// [0, 1] for the losses.
pub fn loss_and_grads(model: &Model, images: &[RgbImage], cfg: &LossConfig) -> Result<LossEval, TrainError> {
    let batch = Batch::new(images)?;
    let mut g = Graph::new();
    let vars = model.bind(&mut g, true);
    let out = pipeline::forward(&mut g, &batch, &vars, &model.config)?;
    let x = g.constant(batch.original.clone());
    let x = g.scalar_mul(x, 1.0 / 255.0);
    let y = g.scalar_mul(out.recon, 1.0 / 255.0);
    let proxy = if cfg.gamma != 0.0 {
        // a frozen copy of the stem, so the proxy cannot be minimized by
        // collapsing the features
        let frozen: std::collections::BTreeMap<String, _> = edit::stem_param_names()
            .into_iter()
            .map(|n| {
                let v = g.constant(model.params[&n].clone());
                (n, v)
            })
            .collect();
        let stem = StemVars::bind(|n| frozen.get(n).copied())?;
        let fx = edit::stem_features(&mut g, x, &stem)?;
        let fy = edit::stem_features(&mut g, y, &stem)?;
        Some(losses::mse(&mut g, fx, fy)?)
    } else {
        None
    };
    let terms = losses::loss_terms(&mut g, x, y, out.qbar, [out.scores.luma, out.scores.chroma], proxy, cfg)?;
    g.backward(terms.total)?;
    let grads = vars
        .iter()
        .map(|(name, &v)| {
            let grad = g.grad(v).cloned().unwrap_or_else(|| crate::autodiff::Tensor::zeros(g.shape(v)));
            (name.clone(), grad)
        })
        .collect();
    let val = |v| g.value(v).data()[0];
    Ok(LossEval {
        total: val(terms.total),
        distortion: val(terms.distortion),
        rate: val(terms.rate),
        alignment: val(terms.alignment),
        grads,
    })
}

/// Adam update followed by the table clamp.
pub fn apply_update(model: &mut Model, adam: &mut Adam, grads: &TensorMap, lr: f64) -> Result<(), TrainError> {
    adam.update(&mut model.params, grads, lr)?;
    model.clamp_qtables();
    Ok(())
}

pub fn tables_within_bounds(model: &Model) -> bool {
    let s = model.config.scale;
    [QTABLE_LUMA, QTABLE_CHROMA].iter().all(|n| model.params[*n].data().iter().all(|&v| v >= s && v <= 255.0 * s))
}

/// Training state over an in-memory set of patches.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub model: Model,
    pub adam: Adam,
    pub step: u64,
    patches: Vec<RgbImage>,
}

impl Trainer {
    pub fn new(config: TrainConfig, patches: Vec<RgbImage>) -> Result<Self, TrainError> {
        config.validate()?;
        if patches.is_empty() {
            return Err(TrainError::Config("no training patches".into()));
        }
        let model = Model::init(config.pipeline, config.seed)?;
        Ok(Self { config, model, adam: Adam::new(AdamHyper::default()), step: 0, patches })
    }

    pub fn resume(ckpt: Checkpoint, patches: Vec<RgbImage>) -> Result<Self, TrainError> {
        ckpt.config.validate()?;
        Ok(Self { config: ckpt.config, model: ckpt.model, adam: ckpt.adam, step: ckpt.step, patches })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint { config: self.config.clone(), model: self.model.clone(), adam: self.adam.clone(), step: self.step }
    }

    pub fn patches(&self) -> &[RgbImage] {
        &self.patches
    }

    /// The batch of step `step`, drawn from a generator seeded by the run
    /// seed and the step so that resumed runs see the same batches.
    pub fn batch_for(&self, step: u64) -> Vec<RgbImage> {
        let n = self.patches.len();
        if self.config.batch_size >= n {
            return self.patches.clone();
        }
        let seed = self.config.seed ^ step.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, n, self.config.batch_size).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| self.patches[i].clone()).collect()
    }

    pub fn learning_rate(&self, step: u64) -> f64 {
        let c = &self.config;
        poly_decay(c.lr_start, c.lr_end, step, c.steps, c.decay_power)
    }

    /// One optimization step; the log carries the loss before the update.
    pub fn step_once(&mut self) -> Result<StepLog, TrainError> {
        let batch = self.batch_for(self.step);
        let eval = loss_and_grads(&self.model, &batch, &self.config.loss)?;
        let lr = self.learning_rate(self.step);
        apply_update(&mut self.model, &mut self.adam, &eval.grads, lr)?;
        debug_assert!(tables_within_bounds(&self.model));
        self.step += 1;
        Ok(StepLog {
            step: self.step,
            loss: eval.total,
            distortion: eval.distortion,
            rate: eval.rate,
            alignment: eval.alignment,
            lr,
        })
    }

    /// Steps until the configured total, reporting each one.
    pub fn run(&mut self, mut on_step: impl FnMut(&StepLog) -> Result<(), TrainError>) -> Result<(), TrainError> {
        while self.step < self.config.steps {
            let log = self.step_once()?;
            on_step(&log)?;
        }
        Ok(())
    }
}

/// Loads patches from `data`, trains for `config.steps` steps writing one
/// log line per step to `log_out`, and saves the checkpoint to `out`.
pub fn train(config: TrainConfig, data: &Path, out: &Path, log_out: &mut dyn Write) -> Result<Checkpoint, TrainError> {
    config.validate()?;
    let patches = load_patches(data, config.patch_size, config.patches, config.seed)?;
    let mut trainer = Trainer::new(config, patches)?;
    let io = |e| TrainError::Io { path: PathBuf::from("<log>"), source: e };
    writeln!(log_out, "{LOG_HEADER}").map_err(io)?;
    trainer.run(|l| writeln!(log_out, "{l}").map_err(io))?;
    let ckpt = trainer.checkpoint();
    ckpt.save(out)?;
    Ok(ckpt)
}
