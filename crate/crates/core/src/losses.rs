//! Training objectives on the autodiff graph. Image arguments are tensors of
//! equal shape; the trainer feeds samples scaled to [0, 1].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Graph, Var};

/// Weight of the alignment term in the total loss.
pub const ALIGNMENT_WEIGHT: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("{name} = {value} is outside {range}")]
    OutOfRange { name: &'static str, value: f64, range: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub lambda: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { lambda: 0.9, gamma: 0.0, sigma: 0.25, alpha: 1e-3, beta: 1e-3 }
    }
}

fn out_of_range(name: &'static str, value: f64, range: &'static str) -> LossError {
    LossError::OutOfRange { name, value, range }
}

pub fn check_sigma(sigma: f64) -> Result<(), LossError> {
    if (0.1..=0.4).contains(&sigma) {
        Ok(())
    } else {
        Err(out_of_range("sigma", sigma, "[0.1, 0.4]"))
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.lambda > 0.0 && self.lambda < 0.99) {
            return Err(out_of_range("lambda", self.lambda, "(0, 0.99)"));
        }
        check_sigma(self.sigma)?;
        for (name, v) in [("gamma", self.gamma), ("alpha", self.alpha), ("beta", self.beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(out_of_range(name, v, "[0, inf)"));
            }
        }
        Ok(())
    }

    pub fn rate_weight(&self) -> f64 {
        1.0 - self.lambda - ALIGNMENT_WEIGHT
    }
}

pub fn mse(g: &mut Graph, x: Var, y: Var) -> Result<Var, AutodiffError> {
    let d = g.sub(x, y)?;
    let sq = g.mul(d, d)?;
    Ok(g.reduce_mean(sq))
}

pub fn mae(g: &mut Graph, x: Var, y: Var) -> Result<Var, AutodiffError> {
    let d = g.sub(x, y)?;
    let n = g.value(d).numel().max(1);
    let l1 = g.reduce_l1(d);
    Ok(g.scalar_mul(l1, 1.0 / n as f64))
}

/// Mean absolute value of every entry.
pub fn mean_abs(g: &mut Graph, x: Var) -> Var {
    let n = g.value(x).numel().max(1);
    let l1 = g.reduce_l1(x);
    g.scalar_mul(l1, 1.0 / n as f64)
}

/// `MSE + γ·proxy`. The proxy is a feature-space distance supplied by the
/// caller; it is ignored when `γ = 0`.
pub fn distortion(g: &mut Graph, x: Var, y: Var, gamma: f64, proxy: Option<Var>) -> Result<Var, AutodiffError> {
    let m = mse(g, x, y)?;
    match proxy {
        Some(p) if gamma != 0.0 => {
            let scaled = g.scalar_mul(p, gamma);
            g.add(m, scaled)
        }
        _ => Ok(m),
    }
}

/// `α(‖Q̄_L‖₁ + ‖Q̄_C‖₁) + β(mean|c_L| + mean|c_C|)`.
pub fn rate(g: &mut Graph, qbar: [Var; 2], scores: [Var; 2], alpha: f64, beta: f64) -> Result<Var, AutodiffError> {
    let ql = g.reduce_l1(qbar[0]);
    let qc = g.reduce_l1(qbar[1]);
    let q = g.add(ql, qc)?;
    let q = g.scalar_mul(q, alpha);
    let cl = mean_abs(g, scores[0]);
    let cc = mean_abs(g, scores[1]);
    let c = g.add(cl, cc)?;
    let c = g.scalar_mul(c, beta);
    g.add(q, c)
}

/// `(1 − σ)·MSE + σ·MAE`.
pub fn alignment(g: &mut Graph, x: Var, y: Var, sigma: f64) -> Result<Var, LossError> {
    check_sigma(sigma)?;
    let m = mse(g, x, y)?;
    let a = mae(g, x, y)?;
    let m = g.scalar_mul(m, 1.0 - sigma);
    let a = g.scalar_mul(a, sigma);
    Ok(g.add(m, a)?)
}

/// `λ·d + (1 − λ − 0.01)·r + 0.01·al`.
pub fn total(g: &mut Graph, d: Var, r: Var, al: Var, lambda: f64) -> Result<Var, AutodiffError> {
    let d = g.scalar_mul(d, lambda);
    let r = g.scalar_mul(r, 1.0 - lambda - ALIGNMENT_WEIGHT);
    let al = g.scalar_mul(al, ALIGNMENT_WEIGHT);
    let s = g.add(d, r)?;
    g.add(s, al)
}

/// The loss and its three components.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    pub distortion: Var,
    pub rate: Var,
    pub alignment: Var,
}

/// Assembles every term for an original `x` and reconstruction `y`.
pub fn loss_terms(
    g: &mut Graph,
    x: Var,
    y: Var,
    qbar: [Var; 2],
    scores: [Var; 2],
    proxy: Option<Var>,
    cfg: &LossConfig,
) -> Result<LossTerms, LossError> {
    cfg.validate()?;
    let d = distortion(g, x, y, cfg.gamma, proxy)?;
    let r = rate(g, qbar, scores, cfg.alpha, cfg.beta)?;
    let al = alignment(g, x, y, cfg.sigma)?;
    let t = total(g, d, r, al, cfg.lambda)?;
    Ok(LossTerms { total: t, distortion: d, rate: r, alignment: al })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn scalar(g: &mut Graph, v: f64) -> Var {
        g.constant(Tensor::scalar(v))
    }

    #[test]
    fn total_weighting() {
        let mut g = Graph::new();
        let (d, r, al) = (scalar(&mut g, 1.0), scalar(&mut g, 0.5), scalar(&mut g, 0.2));
        let t = total(&mut g, d, r, al, 0.9).unwrap();
        assert!((g.value(t).data()[0] - 0.947).abs() < 1e-12);
        for lambda in [0.05, 0.5, 0.98] {
            let c = LossConfig { lambda, ..Default::default() };
            assert_eq!(lambda + c.rate_weight() + ALIGNMENT_WEIGHT, 1.0);
        }
    }

    #[test]
    fn rate_of_uniform_tables() {
        let mut g = Graph::new();
        let q = g.constant(Tensor::full(&[1, 64], 1.0 / 16.0));
        let c = g.constant(Tensor::zeros(&[4, 64]));
        let r = rate(&mut g, [q, q], [c, c], 1.0, 0.0).unwrap();
        assert!((g.value(r).data()[0] - 8.0).abs() < 1e-12);
        let r = rate(&mut g, [q, q], [c, c], 0.0, 5.0).unwrap();
        assert_eq!(g.value(r).data()[0], 0.0);
    }

    #[test]
    fn distortion_with_proxy() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(vec![0.0, 0.0]));
        let y = g.constant(Tensor::from_vec(vec![2f64.sqrt(), -2f64.sqrt()]));
        let p = scalar(&mut g, 0.5);
        let d = distortion(&mut g, x, y, 1.0, Some(p)).unwrap();
        assert!((g.value(d).data()[0] - 2.5).abs() < 1e-12);
        let d0 = distortion(&mut g, x, y, 0.0, Some(p)).unwrap();
        assert!((g.value(d0).data()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn alignment_mix_and_range() {
        let mut g = Graph::new();
        // diffs (a, -a, b, -b) with a + b = 3 and a^2 + b^2 = 8: MSE 4, MAE 1.5
        let (a, b) = ((3.0 + 7f64.sqrt()) / 2.0, (3.0 - 7f64.sqrt()) / 2.0);
        let x = g.constant(Tensor::from_vec(vec![0.0; 4]));
        let y = g.constant(Tensor::from_vec(vec![a, -a, b, -b]));
        let al = alignment(&mut g, x, y, 0.25).unwrap();
        assert!((g.value(al).data()[0] - 3.375).abs() < 1e-12);
        let lo = alignment(&mut g, x, y, 0.1).unwrap();
        let hi = alignment(&mut g, x, y, 0.4).unwrap();
        assert!(g.value(hi).data()[0] < g.value(lo).data()[0]);
        assert!(alignment(&mut g, x, y, 0.05).is_err());
        assert!(alignment(&mut g, x, y, 0.5).is_err());
    }
}
