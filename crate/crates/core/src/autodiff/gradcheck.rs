use super::{AutodiffError, Graph, Tensor, Var};

/// Largest relative error between the analytic gradient of a scalar
/// function and its central-difference estimate, taken over every input
/// element. Relative error is `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn grad_check<F>(f: F, input: &Tensor, eps: f64) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Graph, Var) -> Result<Var, AutodiffError>,
{
    let (analytic, _) = analytic_grad(&f, input)?;
    let mut worst = 0.0f64;
    for (i, &a) in analytic.data().iter().enumerate() {
        let fd = central_difference(&f, input, i, eps)?;
        worst = worst.max(relative_error(a, fd));
    }
    Ok(worst)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Gradient of `f` at `input` and the function value.
pub fn analytic_grad<F>(f: &F, input: &Tensor) -> Result<(Tensor, f64), AutodiffError>
where
    F: Fn(&mut Graph, Var) -> Result<Var, AutodiffError>,
{
    let mut g = Graph::new();
    let x = g.param(input.clone());
    let y = f(&mut g, x)?;
    g.backward(y)?;
    let value = g.value(y).data()[0];
    let grad = g.grad(x).cloned().unwrap_or_else(|| Tensor::zeros(input.shape()));
    Ok((grad, value))
}

pub fn evaluate<F>(f: &F, input: &Tensor) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Graph, Var) -> Result<Var, AutodiffError>,
{
    let mut g = Graph::new();
    let x = g.constant(input.clone());
    let y = f(&mut g, x)?;
    g.value(y).item().ok_or_else(|| AutodiffError::NonScalarLoss(g.shape(y).to_vec()))
}

pub fn central_difference<F>(f: &F, input: &Tensor, index: usize, eps: f64) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Graph, Var) -> Result<Var, AutodiffError>,
{
    let mut plus = input.clone();
    plus.data_mut()[index] += eps;
    let mut minus = input.clone();
    minus.data_mut()[index] -= eps;
    Ok((evaluate(f, &plus)? - evaluate(f, &minus)?) / (2.0 * eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::SoftRoundSign;

    fn sample(shape: &[usize], seed: u64) -> Tensor {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        Tensor::from_fn(shape, |_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn smooth_ops_pass() {
        let w = sample(&[4, 3], 1);
        let err = grad_check(
            |g, x| {
                let wv = g.constant(w.clone());
                let m = g.matmul(x, wv)?;
                let t = g.tanh(m);
                let s = g.sigmoid(t);
                let p = g.mul(s, t)?;
                let r = g.add_scalar(p, 2.0);
                let r = g.reciprocal(r);
                Ok(g.reduce_mean(r))
            },
            &sample(&[2, 4], 2),
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn conv_and_pool_pass() {
        let k = sample(&[2, 3, 3, 3], 3);
        let b = sample(&[2], 4);
        let err = grad_check(
            |g, x| {
                let kv = g.param(k.clone());
                let bv = g.param(b.clone());
                let c = g.conv2d(x, kv, Some(bv), 2, 1)?;
                let c = g.tanh(c);
                let p = g.avg_pool2d(c, 2)?;
                let q = g.mul(p, p)?;
                Ok(g.reduce_sum(q))
            },
            &sample(&[1, 3, 8, 8], 5),
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn shape_ops_pass() {
        let err = grad_check(
            |g, x| {
                let a = g.narrow(x, 1, 1, 2)?;
                let b = g.permute(x, &[0, 2, 1])?;
                let b = g.reshape(b, &[2, 3, 4])?;
                let b = g.narrow(b, 1, 0, 2)?;
                let c = g.concat(&[a, b], 2)?;
                let c = g.scalar_mul(c, 1.5);
                let d = g.mul(c, c)?;
                let s = g.sub(d, c)?;
                Ok(g.reduce_sum(s))
            },
            &sample(&[2, 3, 4], 6),
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn piecewise_ops_pass_away_from_kinks() {
        // inputs at least 0.05 from integers, zero and the clamp bounds
        let x = Tensor::from_vec(vec![0.3, -1.4, 2.2, 0.65, -0.2, 3.7, 1.1, -2.6]);
        let err = grad_check(
            |g, x| {
                let s = g.scalar_mul(x, 1.0);
                let r = g.soft_round(s, SoftRoundSign::Negative);
                let c = g.clamp(x, -2.0, 3.0)?;
                let k = g.kwta(x, 3)?;
                let l = g.reduce_l1(x);
                let a = g.add(r, c)?;
                let a = g.add(a, k)?;
                let m = g.mul(a, a)?;
                let m = g.reduce_sum(m);
                let out = g.add(m, l)?;
                Ok(out)
            },
            &x,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
