use std::collections::BTreeMap;

use rayon::prelude::*;

use super::Metric;
use crate::blur::gaussian_blur;
use crate::dataset::DensityMap;
use crate::fixations::map_pixel;
use crate::grid::{DensityGrid, SaliencyMap};
use crate::{Error, Result, Scalar};

/// Lower clamp on the pooled density in the shuffled-AUC map.
pub const SAUC_CLAMP: f64 = 1e-20;

/// Nearest-neighbour resampling of a density's masses onto another shape.
fn resample<S: Scalar>(density: &DensityGrid<S>, shape: (usize, usize)) -> Vec<S> {
    let mut out = Vec::with_capacity(shape.0 * shape.1);
    for row in 0..shape.0 {
        for col in 0..shape.1 {
            let (r, c) = map_pixel((row, col), shape, density.shape());
            out.push(density.log_at(r, c).exp());
        }
    }
    out
}

/// Transforms predicted densities into the saliency map that scores best
/// under `metric`.
///
/// * IG, LL, NSS and AUC use the density itself.
/// * CC, KLDiv and SIM use the density blurred with the same Gaussian as the
///   empirical maps (`empirical_sigma`). This is an approximation of the true
///   expected-score optimum.
/// * sAUC divides the density pointwise by the mean density of all other
///   images, resampled to this image's shape.
pub fn optimal_saliency_map<S: Scalar>(
    model: &DensityMap<S>,
    metric: Metric,
    empirical_sigma: S,
) -> Result<BTreeMap<String, SaliencyMap<S>>> {
    let entries: Vec<(&String, &DensityGrid<S>)> = model.iter().collect();
    if metric == Metric::Sauc && entries.len() < 2 {
        return Err(Error::SingleImagePool);
    }
    let maps: Vec<SaliencyMap<S>> = entries
        .par_iter()
        .map(|&(id, density)| {
            let (h, w) = density.shape();
            match metric {
                Metric::Ig | Metric::Ll | Metric::Nss | Metric::Auc => Ok(density.to_saliency()),
                Metric::Cc | Metric::KlDiv | Metric::Sim => {
                    SaliencyMap::new(h, w, gaussian_blur(&density.probs(), h, w, empirical_sigma)?)
                }
                Metric::Sauc => {
                    let mut mean = vec![S::zero(); h * w];
                    let mut others = 0usize;
                    for (other_id, other) in &entries {
                        if *other_id == id {
                            continue;
                        }
                        others += 1;
                        for (m, v) in mean.iter_mut().zip(resample(other, (h, w))) {
                            *m += v;
                        }
                    }
                    let n = S::from_usize_lossy(others);
                    let clamp = S::lit(SAUC_CLAMP);
                    let values =
                        density.probs().iter().zip(&mean).map(|(&p, &m)| p / (m / n).max(clamp)).collect();
                    SaliencyMap::new(h, w, values)
                }
            }
        })
        .collect::<Result<_>>()?;
    Ok(entries.into_iter().map(|(id, _)| id.clone()).zip(maps).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map_of(items: &[(&str, DensityGrid<f64>)]) -> DensityMap<f64> {
        items.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn nss_map_is_the_density() {
        let d = DensityGrid::normalize(2, 2, &[0.1, 0.2, 0.3, 0.4]).unwrap();
        let maps = optimal_saliency_map(&map_of(&[("a", d.clone())]), Metric::Nss, 1.0).unwrap();
        assert_eq!(maps["a"], d.to_saliency());
    }

    #[test]
    fn sauc_pointwise_division() {
        let model = map_of(&[
            ("a", DensityGrid::normalize(1, 2, &[0.8, 0.2]).unwrap()),
            ("b", DensityGrid::uniform(1, 2).unwrap()),
        ]);
        let maps = optimal_saliency_map(&model, Metric::Sauc, 1.0).unwrap();
        let v = maps["a"].values();
        assert!((v[0] - 1.6).abs() < 1e-12 && (v[1] - 0.4).abs() < 1e-12, "{v:?}");
    }

    #[test]
    fn sauc_with_uniform_pool_is_proportional() {
        let a = DensityGrid::normalize(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let model = map_of(&[
            ("a", a.clone()),
            ("b", DensityGrid::uniform(4, 4).unwrap()),
            ("c", DensityGrid::uniform(1, 5).unwrap()),
        ]);
        let maps = optimal_saliency_map(&model, Metric::Sauc, 1.0).unwrap();
        let ratio: Vec<f64> = maps["a"].values().iter().zip(a.probs()).map(|(s, p)| s / p).collect();
        for r in &ratio {
            assert!((r - ratio[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn sauc_needs_two_images() {
        let model = map_of(&[("a", DensityGrid::uniform(2, 2).unwrap())]);
        assert_eq!(optimal_saliency_map(&model, Metric::Sauc, 1.0), Err(Error::SingleImagePool));
    }

    #[test]
    fn distribution_maps_are_blurred() {
        let d = DensityGrid::normalize(1, 5, &[0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let maps = optimal_saliency_map(&map_of(&[("a", d)]), Metric::Cc, 1.0).unwrap();
        let v = maps["a"].values();
        assert!(v[1] > 0.0 && v[2] < 1.0);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
