use super::check_pixels;
use crate::grid::{DensityGrid, SaliencyMap};
use crate::{Error, Result, Scalar};

/// Regularizer inside the KL-divergence logarithm.
pub const KLDIV_EPS: f64 = 1e-20;

fn mean_popstd<S: Scalar>(values: &[S]) -> (S, S) {
    let n = S::from_usize_lossy(values.len());
    let mean = values.iter().copied().sum::<S>() / n;
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / n;
    (mean, var.sqrt())
}

fn same_shape<S: Scalar>(map: &SaliencyMap<S>, density: &DensityGrid<S>) -> Result<()> {
    if map.shape() != density.shape() {
        return Err(Error::ShapeMismatch { expected: density.shape(), got: map.shape() });
    }
    Ok(())
}

/// Normalized scanpath saliency: mean z-score of the map at fixated pixels.
pub fn nss<S: Scalar>(saliency: &SaliencyMap<S>, fixated: &[(usize, usize)]) -> Result<S> {
    if fixated.is_empty() {
        return Err(Error::NoFixations);
    }
    check_pixels(saliency, fixated)?;
    let (mean, std) = mean_popstd(saliency.values());
    if std == S::zero() {
        return Err(Error::ZeroVariance);
    }
    let total: S = fixated.iter().map(|&(r, c)| (saliency.at(r, c) - mean) / std).sum();
    Ok(total / S::from_usize_lossy(fixated.len()))
}

/// Pearson correlation between a prediction and the empirical density.
pub fn cc<S: Scalar>(prediction: &SaliencyMap<S>, empirical: &DensityGrid<S>) -> Result<S> {
    same_shape(prediction, empirical)?;
    let q = empirical.probs();
    let (mp, sp) = mean_popstd(prediction.values());
    let (mq, sq) = mean_popstd(&q);
    if sp == S::zero() || sq == S::zero() {
        return Err(Error::ZeroVariance);
    }
    let n = S::from_usize_lossy(q.len());
    let cov = prediction.values().iter().zip(&q).map(|(&p, &q)| (p - mp) * (q - mq)).sum::<S>() / n;
    Ok((cov / (sp * sq)).max(-S::one()).min(S::one()))
}

fn as_distribution<S: Scalar>(prediction: &SaliencyMap<S>) -> Result<Vec<S>> {
    if let Some((index, &v)) = prediction.values().iter().enumerate().find(|(_, &v)| v < S::zero()) {
        return Err(Error::BadValue { index, value: v.as_f64() });
    }
    let total: S = prediction.values().iter().copied().sum();
    if total <= S::zero() {
        return Err(Error::AllZero);
    }
    Ok(prediction.values().iter().map(|&v| v / total).collect())
}

/// `Σ q · log2((q + ε) / (p + ε))` with `q` the empirical density and `p` the
/// prediction rescaled to sum to one.
pub fn kldiv<S: Scalar>(prediction: &SaliencyMap<S>, empirical: &DensityGrid<S>) -> Result<S> {
    same_shape(prediction, empirical)?;
    let p = as_distribution(prediction)?;
    let eps = S::lit(KLDIV_EPS);
    let nats: S = empirical
        .probs()
        .iter()
        .zip(&p)
        .filter(|(&q, _)| q > S::zero())
        .map(|(&q, &p)| q * ((q + eps) / (p + eps)).ln())
        .sum();
    Ok(nats.to_bits_from_nats())
}

/// Histogram intersection `Σ min(p, q)` of the two normalized maps.
pub fn sim<S: Scalar>(prediction: &SaliencyMap<S>, empirical: &DensityGrid<S>) -> Result<S> {
    same_shape(prediction, empirical)?;
    let p = as_distribution(prediction)?;
    Ok(empirical.probs().iter().zip(&p).map(|(&q, &p)| q.min(p)).sum::<S>().min(S::one()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nss_examples() {
        let m = SaliencyMap::new(1, 4, vec![0.0f64, 0.0, 0.0, 1.0]).unwrap();
        let popstd = (0.1875f64).sqrt();
        assert!((nss(&m, &[(0, 3)]).unwrap() - 0.75 / popstd).abs() < 1e-12);
        assert!((nss(&m, &[(0, 3)]).unwrap() - 1.7321).abs() < 1e-4);
        assert!((nss(&m, &[(0, 0)]).unwrap() + 0.5774).abs() < 1e-4);
        let flat = SaliencyMap::new(1, 4, vec![2.0f64; 4]).unwrap();
        assert_eq!(nss(&flat, &[(0, 0)]), Err(Error::ZeroVariance));
    }

    #[test]
    fn identical_prediction() {
        let q = DensityGrid::normalize(2, 2, &[0.1f64, 0.2, 0.3, 0.4]).unwrap();
        let p = q.to_saliency();
        assert!((cc(&p, &q).unwrap() - 1.0).abs() < 1e-12);
        assert!(kldiv(&p, &q).unwrap().abs() < 1e-12);
        assert!((sim(&p, &q).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sim_and_kldiv_examples() {
        let q = DensityGrid::normalize(1, 2, &[1.0f64, 0.0]).unwrap();
        let p = SaliencyMap::new(1, 2, vec![3.0f64, 3.0]).unwrap();
        assert_eq!(sim(&p, &q).unwrap(), 0.5);

        let q = DensityGrid::normalize(1, 2, &[0.25f64, 0.75]).unwrap();
        let p = SaliencyMap::new(1, 2, vec![0.75f64, 0.25]).unwrap();
        let expected = 0.25 * (1.0f64 / 3.0).log2() + 0.75 * 3.0f64.log2();
        assert!((kldiv(&p, &q).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.7925).abs() < 1e-4);
    }

    #[test]
    fn cc_errors_on_constant_maps() {
        let q = DensityGrid::<f64>::uniform(2, 2).unwrap();
        let p = SaliencyMap::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(cc(&p, &q), Err(Error::ZeroVariance));
        let q = DensityGrid::normalize(2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let flat = SaliencyMap::new(2, 2, vec![1.0; 4]).unwrap();
        assert_eq!(cc(&flat, &q), Err(Error::ZeroVariance));
        let wrong = SaliencyMap::new(1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(matches!(cc(&wrong, &q), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn nss_is_affine_invariant() {
        let m = SaliencyMap::new(2, 3, vec![0.3f64, -1.0, 2.5, 0.0, 0.7, 1.1]).unwrap();
        let fix = [(0, 2), (1, 1), (1, 1), (0, 0)];
        let base = nss(&m, &fix).unwrap();
        let shifted = m.map(|v| 3.7 * v - 12.0).unwrap();
        assert!((nss(&shifted, &fix).unwrap() - base).abs() < 1e-9);
    }
}
