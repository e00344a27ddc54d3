//! Per-pixel grids: normalized fixation densities (log domain) and
//! unnormalized saliency maps.

use crate::logspace::logsumexp;
use crate::{Error, Result, Scalar};

fn check_dims(height: usize, width: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::BadDimensions(format!("{height}x{width}")));
    }
    let n = height
        .checked_mul(width)
        .ok_or_else(|| Error::BadDimensions(format!("{height}x{width} overflows")))?;
    if n != len {
        return Err(Error::BadDimensions(format!(
            "{height}x{width} needs {n} values, got {len}"
        )));
    }
    Ok(())
}

/// A discrete probability distribution over the pixels of one image, stored
/// as natural-log masses in row-major order. Masses sum to one and at least
/// one pixel has positive mass; zero-mass pixels hold −∞.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid<S> {
    height: usize,
    width: usize,
    log_p: Vec<S>,
}

impl<S: Scalar> DensityGrid<S> {
    /// Normalizes nonnegative masses into a density.
    pub fn normalize(height: usize, width: usize, values: &[S]) -> Result<Self> {
        check_dims(height, width, values.len())?;
        for (index, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < S::zero() {
                return Err(Error::BadValue {
                    index,
                    value: v.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        let total: S = values.iter().copied().sum();
        if total <= S::zero() {
            return Err(Error::AllZero);
        }
        if !total.is_finite() {
            // Rescale first so the sum is representable.
            let max = values.iter().copied().fold(S::zero(), S::max);
            let scaled: Vec<S> = values.iter().map(|&v| v / max).collect();
            return Self::normalize(height, width, &scaled);
        }
        let log_total = total.ln();
        let log_p = values
            .iter()
            .map(|&v| if v > S::zero() { v.ln() - log_total } else { S::neg_infinity() })
            .collect();
        Ok(Self { height, width, log_p })
    }

    /// Wraps natural-log masses that must already sum to one.
    pub fn from_log(height: usize, width: usize, log_p: Vec<S>) -> Result<Self> {
        Self::from_log_with_tolerance(height, width, log_p, S::NORM_TOL)
    }

    pub(crate) fn from_log_with_tolerance(
        height: usize,
        width: usize,
        log_p: Vec<S>,
        tolerance: f64,
    ) -> Result<Self> {
        check_dims(height, width, log_p.len())?;
        Self::check_log_entries(&log_p)?;
        let lse = logsumexp(&log_p);
        if lse == S::neg_infinity() {
            return Err(Error::AllZero);
        }
        if lse.as_f64().abs() > tolerance {
            return Err(Error::NotNormalized { mass: lse.as_f64().exp() });
        }
        Ok(Self { height, width, log_p })
    }

    /// Spatial softmax of arbitrary logits (finite or −∞).
    pub fn from_logits(height: usize, width: usize, mut logits: Vec<S>) -> Result<Self> {
        check_dims(height, width, logits.len())?;
        Self::check_log_entries(&logits)?;
        let lse = logsumexp(&logits);
        if lse == S::neg_infinity() {
            return Err(Error::AllZero);
        }
        for l in &mut logits {
            *l -= lse;
        }
        Ok(Self { height, width, log_p: logits })
    }

    fn check_log_entries(log_p: &[S]) -> Result<()> {
        for (index, &v) in log_p.iter().enumerate() {
            if v.is_nan() || v == S::infinity() {
                return Err(Error::BadValue { index, value: v.as_f64() });
            }
        }
        Ok(())
    }

    pub fn uniform(height: usize, width: usize) -> Result<Self> {
        check_dims(height, width, height.saturating_mul(width))?;
        let n = S::from_usize_lossy(height * width);
        Ok(Self { height, width, log_p: vec![-n.ln(); height * width] })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.log_p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_p.is_empty()
    }

    pub fn log_p(&self) -> &[S] {
        &self.log_p
    }

    pub fn into_log_p(self) -> Vec<S> {
        self.log_p
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn log_at(&self, row: usize, col: usize) -> S {
        self.log_p[self.index(row, col)]
    }

    /// Linear-domain masses.
    pub fn probs(&self) -> Vec<S> {
        self.log_p.iter().map(|l| l.exp()).collect()
    }

    /// `Σ p`, which is one up to rounding.
    pub fn mass(&self) -> S {
        logsumexp(&self.log_p).exp()
    }

    /// Row-major index of the most probable pixel (first on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &l) in self.log_p.iter().enumerate() {
            if l > self.log_p[best] {
                best = i;
            }
        }
        best
    }

    /// Entropy in bits, with `0 · log 0 = 0`.
    pub fn entropy_bits(&self) -> S {
        let h: S = self
            .log_p
            .iter()
            .filter(|l| l.is_finite())
            .map(|&l| -l.exp() * l)
            .sum();
        h.to_bits_from_nats()
    }

    pub fn to_saliency(&self) -> SaliencyMap<S> {
        SaliencyMap { height: self.height, width: self.width, values: self.probs() }
    }

    /// Converts the scalar type.
    pub fn cast<T: Scalar>(&self) -> DensityGrid<T> {
        DensityGrid {
            height: self.height,
            width: self.width,
            log_p: self.log_p.iter().map(|&l| T::lit(l.as_f64())).collect(),
        }
    }
}

/// Unnormalized per-pixel saliency values on an arbitrary scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap<S> {
    height: usize,
    width: usize,
    values: Vec<S>,
}

impl<S: Scalar> SaliencyMap<S> {
    pub fn new(height: usize, width: usize, values: Vec<S>) -> Result<Self> {
        check_dims(height, width, values.len())?;
        if let Some((index, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::BadValue { index, value: v.as_f64() });
        }
        Ok(Self { height, width, values })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> S {
        self.values[row * self.width + col]
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Result<Self> {
        Self::new(self.height, self.width, self.values.iter().map(|&v| f(v)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_uniform() {
        let d = DensityGrid::normalize(2, 2, &[1.0f64; 4]).unwrap();
        for &l in d.log_p() {
            assert!((l - 0.25f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn normalize_point_mass() {
        let d = DensityGrid::normalize(1, 2, &[2.0f64, 0.0]).unwrap();
        assert_eq!(d.log_p(), &[0.0, f64::NEG_INFINITY]);
    }

    #[test]
    fn normalize_already_summing_to_one() {
        let d = DensityGrid::normalize(1, 4, &[0.4f64, 0.3, 0.2, 0.1]).unwrap();
        for (l, p) in d.log_p().iter().zip([0.4f64, 0.3, 0.2, 0.1]) {
            assert!((l - p.ln()).abs() < 1e-15);
        }
        assert!((d.mass() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn normalize_errors() {
        assert_eq!(DensityGrid::normalize(1, 2, &[0.0f64, 0.0]), Err(Error::AllZero));
        assert!(matches!(
            DensityGrid::normalize(1, 2, &[1.0f64, -1.0]),
            Err(Error::BadValue { index: 1, .. })
        ));
        assert!(matches!(
            DensityGrid::normalize(1, 2, &[f64::NAN, 1.0]),
            Err(Error::BadValue { index: 0, .. })
        ));
        assert!(matches!(
            DensityGrid::normalize(1, 2, &[f64::INFINITY, 1.0]),
            Err(Error::BadValue { .. })
        ));
        assert!(matches!(
            DensityGrid::normalize(0, 2, &[] as &[f64]),
            Err(Error::BadDimensions(_))
        ));
    }

    #[test]
    fn huge_values_rescale() {
        let d = DensityGrid::normalize(1, 2, &[f64::MAX, f64::MAX]).unwrap();
        assert!((d.log_p()[0] - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn from_log_checks_mass() {
        assert!(matches!(
            DensityGrid::from_log(1, 2, vec![0.9f64.ln(), f64::NEG_INFINITY]),
            Err(Error::NotNormalized { .. })
        ));
        assert!(DensityGrid::from_log(1, 2, vec![0.0f64, f64::NEG_INFINITY]).is_ok());
    }

    #[test]
    fn softmax_of_logits() {
        let d = DensityGrid::from_logits(1, 3, vec![1.0f64, 1.0, 1.0]).unwrap();
        assert!((d.log_p()[2] + 3f64.ln()).abs() < 1e-15);
        let single = DensityGrid::from_logits(1, 1, vec![123.0f64]).unwrap();
        assert_eq!(single.log_p(), &[0.0]);
    }

    #[test]
    fn f32_grid() {
        let d = DensityGrid::<f32>::normalize(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert!((d.mass() - 1.0).abs() < 1e-5);
        assert_eq!(d.argmax(), 5);
    }

    #[test]
    fn entropy_of_uniform() {
        let d = DensityGrid::<f64>::uniform(2, 4).unwrap();
        assert!((d.entropy_bits() - 3.0).abs() < 1e-12);
    }
}
