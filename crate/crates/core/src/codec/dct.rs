//! Orthonormal 8×8 type-II DCT and its inverse.
//!
//! Uses the JPEG scaling `F(v,u) = C(v)C(u)/4 · ΣΣ f(y,x) cos(..) cos(..)`
//! with `C(0) = 1/√2`, evaluated separably as `F = A·f·Aᵀ`.

use std::sync::OnceLock;

/// `A[k][n] = C(k)/2 · cos((2n+1)kπ/16)`; rows are the DCT basis vectors.
pub fn dct_matrix() -> &'static [[f64; 8]; 8] {
    static MATRIX: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    MATRIX.get_or_init(|| {
        let mut a = [[0.0; 8]; 8];
        for (k, row) in a.iter_mut().enumerate() {
            let ck = if k == 0 { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
            for (n, v) in row.iter_mut().enumerate() {
                *v = ck / 2.0 * (((2 * n + 1) * k) as f64 * std::f64::consts::PI / 16.0).cos();
            }
        }
        a
    })
}

/// 64×64 matrix `M` such that for a row-major coefficient block `c`,
/// the pixel block is `p[i] = Σ_j c[j] · M[j][i]`.
pub fn idct_basis() -> &'static [f64] {
    static BASIS: OnceLock<Vec<f64>> = OnceLock::new();
    BASIS.get_or_init(|| {
        let a = dct_matrix();
        let mut m = vec![0.0; 64 * 64];
        for v in 0..8 {
            for u in 0..8 {
                let j = v * 8 + u;
                for y in 0..8 {
                    for x in 0..8 {
                        m[j * 64 + y * 8 + x] = a[v][y] * a[u][x];
                    }
                }
            }
        }
        m
    })
}

pub fn fdct_block(block: &[f64; 64]) -> [f64; 64] {
    let a = dct_matrix();
    // rows first: t = f · Aᵀ
    let mut t = [0.0; 64];
    for y in 0..8 {
        for u in 0..8 {
            t[y * 8 + u] = (0..8).map(|x| block[y * 8 + x] * a[u][x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for v in 0..8 {
        for u in 0..8 {
            out[v * 8 + u] = (0..8).map(|y| a[v][y] * t[y * 8 + u]).sum();
        }
    }
    out
}

pub fn idct_block(coeffs: &[f64; 64]) -> [f64; 64] {
    let a = dct_matrix();
    // t = Aᵀ · F
    let mut t = [0.0; 64];
    for y in 0..8 {
        for u in 0..8 {
            t[y * 8 + u] = (0..8).map(|v| a[v][y] * coeffs[v * 8 + u]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            out[y * 8 + x] = (0..8).map(|u| t[y * 8 + u] * a[u][x]).sum();
        }
    }
    out
}
