//! Separable Gaussian blur with symmetric (edge-repeating) reflective
//! padding. The kernel is truncated at `ceil(4σ)` taps on each side and
//! renormalized, so blurring preserves constant maps exactly.
//!
//! The operator is materialized as one dense matrix per axis, which keeps the
//! transpose and the σ-derivative needed for backpropagation trivial. Grids
//! here are small.

use crate::{Error, Result, Scalar};

/// Folds an out-of-range index back into `0..n` by mirroring about the
/// edges (`-1 → 0`, `n → n - 1`).
#[inline]
pub fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let k = i.rem_euclid(period) as usize;
    if k < n {
        k
    } else {
        2 * n - 1 - k
    }
}

/// Normalized 1D Gaussian taps and their derivative with respect to σ.
/// Widest supported kernel, in pixels.
pub const MAX_SIGMA: f64 = 1e4;

#[derive(Debug, Clone)]
pub struct GaussianKernel<S> {
    pub sigma: S,
    pub radius: usize,
    pub weights: Vec<S>,
    pub d_weights: Vec<S>,
}

impl<S: Scalar> GaussianKernel<S> {
    pub fn new(sigma: S) -> Result<Self> {
        if !(sigma > S::zero() && sigma <= S::lit(MAX_SIGMA)) {
            return Err(Error::InvalidConfig(format!("blur sigma must lie in (0, {MAX_SIGMA}], got {sigma}")));
        }
        let radius = (S::lit(4.0) * sigma).ceil().to_usize().unwrap_or(1).max(1);
        let two_var = S::lit(2.0) * sigma * sigma;
        let sigma3 = sigma * sigma * sigma;
        let offsets: Vec<S> = (0..=2 * radius).map(|j| S::from_usize_lossy(j) - S::from_usize_lossy(radius)).collect();
        let raw: Vec<S> = offsets.iter().map(|&d| (-(d * d) / two_var).exp()).collect();
        let total: S = raw.iter().copied().sum();
        let weights: Vec<S> = raw.iter().map(|&e| e / total).collect();
        // d w_j / dσ = w_j (d_j² − Σ_m w_m d_m²) / σ³
        let mean_sq: S = weights.iter().zip(&offsets).map(|(&w, &d)| w * d * d).sum();
        let d_weights = weights
            .iter()
            .zip(&offsets)
            .map(|(&w, &d)| w * (d * d - mean_sq) / sigma3)
            .collect();
        Ok(Self { sigma, radius, weights, d_weights })
    }

    /// Dense `n × n` operator for one axis, and its σ-derivative.
    fn axis_matrices(&self, n: usize) -> (Vec<S>, Vec<S>) {
        let mut m = vec![S::zero(); n * n];
        let mut dm = vec![S::zero(); n * n];
        let r = self.radius as isize;
        for i in 0..n {
            for j in -r..=r {
                let k = reflect(i as isize + j, n);
                let tap = (j + r) as usize;
                m[i * n + k] += self.weights[tap];
                dm[i * n + k] += self.d_weights[tap];
            }
        }
        (m, dm)
    }
}

/// Blur of an `height × width` map: `B = R · X · Cᵀ` with `R`, `C` the
/// per-axis operators.
#[derive(Debug, Clone)]
pub struct BlurOperator<S> {
    height: usize,
    width: usize,
    rows: Vec<S>,
    cols: Vec<S>,
    d_rows: Vec<S>,
    d_cols: Vec<S>,
}

fn left_mul<S: Scalar>(m: &[S], x: &[S], n: usize, w: usize) -> Vec<S> {
    // (n×n) · (n×w)
    let mut out = vec![S::zero(); n * w];
    for i in 0..n {
        let row = &mut out[i * w..(i + 1) * w];
        for k in 0..n {
            let a = m[i * n + k];
            if a == S::zero() {
                continue;
            }
            for (o, &v) in row.iter_mut().zip(&x[k * w..(k + 1) * w]) {
                *o += a * v;
            }
        }
    }
    out
}

fn left_mul_t<S: Scalar>(m: &[S], x: &[S], n: usize, w: usize) -> Vec<S> {
    // (n×n)ᵀ · (n×w)
    let mut out = vec![S::zero(); n * w];
    for k in 0..n {
        let src = &x[k * w..(k + 1) * w];
        for i in 0..n {
            let a = m[k * n + i];
            if a == S::zero() {
                continue;
            }
            for (o, &v) in out[i * w..(i + 1) * w].iter_mut().zip(src) {
                *o += a * v;
            }
        }
    }
    out
}

fn right_mul_t<S: Scalar>(x: &[S], m: &[S], h: usize, n: usize) -> Vec<S> {
    // (h×n) · (n×n)ᵀ
    let mut out = vec![S::zero(); h * n];
    for r in 0..h {
        let src = &x[r * n..(r + 1) * n];
        for c in 0..n {
            let mrow = &m[c * n..(c + 1) * n];
            out[r * n + c] = src.iter().zip(mrow).map(|(&a, &b)| a * b).sum();
        }
    }
    out
}

fn right_mul<S: Scalar>(x: &[S], m: &[S], h: usize, n: usize) -> Vec<S> {
    // (h×n) · (n×n)
    let mut out = vec![S::zero(); h * n];
    for r in 0..h {
        let dst = &mut out[r * n..(r + 1) * n];
        for k in 0..n {
            let a = x[r * n + k];
            if a == S::zero() {
                continue;
            }
            for (o, &b) in dst.iter_mut().zip(&m[k * n..(k + 1) * n]) {
                *o += a * b;
            }
        }
    }
    out
}

impl<S: Scalar> BlurOperator<S> {
    pub fn new(sigma: S, height: usize, width: usize) -> Result<Self> {
        let kernel = GaussianKernel::new(sigma)?;
        let (rows, d_rows) = kernel.axis_matrices(height);
        let (cols, d_cols) = kernel.axis_matrices(width);
        Ok(Self { height, width, rows, cols, d_rows, d_cols })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn apply(&self, x: &[S]) -> Vec<S> {
        let (h, w) = (self.height, self.width);
        debug_assert_eq!(x.len(), h * w);
        right_mul_t(&left_mul(&self.rows, x, h, w), &self.cols, h, w)
    }

    /// `Rᵀ · G · C`, the adjoint of [`apply`](Self::apply).
    pub fn apply_transpose(&self, g: &[S]) -> Vec<S> {
        let (h, w) = (self.height, self.width);
        right_mul(&left_mul_t(&self.rows, g, h, w), &self.cols, h, w)
    }

    /// `Σ g ⊙ ∂B/∂σ` for `B = apply(x)`.
    pub fn sigma_gradient(&self, x: &[S], g: &[S]) -> S {
        let (h, w) = (self.height, self.width);
        let a = right_mul_t(&left_mul(&self.d_rows, x, h, w), &self.cols, h, w);
        let b = right_mul_t(&left_mul(&self.rows, x, h, w), &self.d_cols, h, w);
        g.iter().zip(a.iter().zip(&b)).map(|(&gi, (&ai, &bi))| gi * (ai + bi)).sum()
    }
}

/// One-shot blur of a row-major map.
pub fn gaussian_blur<S: Scalar>(values: &[S], height: usize, width: usize, sigma: S) -> Result<Vec<S>> {
    if values.len() != height * width {
        return Err(Error::BadDimensions(format!("{height}x{width} needs {} values", height * width)));
    }
    Ok(BlurOperator::new(sigma, height, width)?.apply(values))
}
