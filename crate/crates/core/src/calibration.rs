//! Equal-probability-mass quantile test for confidence calibration.
//!
//! Pixels are sorted by predicted probability and cut into `K` bins of
//! (approximately) equal mass; a calibrated model receives fixations in each
//! bin in proportion to the bin's mass. Pixels cannot be split, so bin masses
//! are only close to `1/K`; the chi-square null uses the actual masses.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dataset::DensityMap;
use crate::fixations::{Fixation, FixationSet};
use crate::grid::DensityGrid;
use crate::metrics::pixel_in;
use crate::{Error, Result, Scalar};

pub const DEFAULT_BINS: usize = 4;
pub const MAX_BINS: usize = 100;
/// Chi-square level above which a histogram counts as miscalibrated.
pub const SIGNIFICANCE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Overconfident,
    Underconfident,
    Calibrated,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Overconfident => "overconfident",
            Verdict::Underconfident => "underconfident",
            Verdict::Calibrated => "calibrated",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationHistogram<S> {
    /// Observed fixations per bin, bin 0 holding the least probable pixels.
    pub bins: Vec<usize>,
    /// Mean predicted mass of each bin over the evaluated images.
    pub bin_masses: Vec<S>,
    /// Expected fixations per bin under the model.
    pub expected: Vec<S>,
    pub n_fixations: usize,
    pub chi_square: S,
    pub verdict: Verdict,
}

fn check_bins(k: usize) -> Result<()> {
    if !(2..=MAX_BINS).contains(&k) {
        return Err(Error::InvalidConfig(format!("bin count must be in 2..={MAX_BINS}, got {k}")));
    }
    Ok(())
}

/// Bin index of every pixel.
///
/// Pixels are walked in ascending probability (ties by row-major index); a
/// pixel goes to the smallest bin `j` with cumulative mass before it `< (j +
/// 1) / K`, capped at `K − 1`. Bins are contiguous in the sorted order.
pub fn quantile_partition<S: Scalar>(density: &DensityGrid<S>, k: usize) -> Result<Vec<usize>> {
    check_bins(k)?;
    if density.len() < k {
        return Err(Error::TooFewPixels { pixels: density.len(), bins: k });
    }
    let log_p = density.log_p();
    let mut order: Vec<usize> = (0..log_p.len()).collect();
    order.sort_by(|&a, &b| log_p[a].partial_cmp(&log_p[b]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    let kf = S::from_usize_lossy(k);
    let mut bins = vec![0; log_p.len()];
    let mut cumulative = S::zero();
    let mut j = 0;
    for idx in order {
        while j < k - 1 && cumulative >= S::from_usize_lossy(j + 1) / kf {
            j += 1;
        }
        bins[idx] = j;
        cumulative += log_p[idx].exp();
    }
    Ok(bins)
}

/// Probability mass in each bin of a partition.
pub fn bin_masses<S: Scalar>(density: &DensityGrid<S>, partition: &[usize], k: usize) -> Vec<S> {
    let mut masses = vec![S::zero(); k];
    for (&b, &l) in partition.iter().zip(density.log_p()) {
        masses[b] += l.exp();
    }
    masses
}

/// `Σ (obs − exp)² / exp` over bins with positive expectation, with the
/// number of such bins. Observations in a zero-expectation bin make the
/// statistic infinite.
pub fn chi_square<S: Scalar>(observed: &[usize], expected: &[S]) -> (S, usize) {
    let mut stat = S::zero();
    let mut used = 0;
    for (&o, &e) in observed.iter().zip(expected) {
        let o = S::from_usize_lossy(o);
        if e > S::zero() {
            stat += (o - e) * (o - e) / e;
            used += 1;
        } else if o > S::zero() {
            stat = S::infinity();
        }
    }
    (stat, used)
}

/// 95% chi-square critical value.
pub fn critical_value(degrees_of_freedom: usize) -> f64 {
    ChiSquared::new(degrees_of_freedom.max(1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(SIGNIFICANCE)
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &o in &order[i..j] {
            ranks[o] = rank;
        }
        i = j;
    }
    ranks
}

/// Spearman rank correlation between bin index and `values`; 0 if constant.
pub fn spearman_with_index(values: &[f64]) -> f64 {
    let index: Vec<f64> = (0..values.len()).map(|i| i as f64).collect();
    let (ra, rb) = (average_ranks(&index), average_ranks(values));
    let n = values.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(a, b)| (a - ma) * (b - mb)).sum();
    let va: f64 = ra.iter().map(|a| (a - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|b| (b - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

/// Calibrated unless the chi-square statistic exceeds the 95% critical value;
/// then the direction is the sign of the rank correlation between bin index
/// and observed/expected ratio. Falling ratios (too few fixations in the
/// high-probability bins) mean overconfidence.
pub fn verdict<S: Scalar>(observed: &[usize], expected: &[S]) -> (S, Verdict) {
    let (stat, used) = chi_square(observed, expected);
    if used < 2 || stat.as_f64() <= critical_value(used - 1) {
        return (stat, Verdict::Calibrated);
    }
    let ratios: Vec<f64> = observed
        .iter()
        .zip(expected)
        .filter(|(_, &e)| e > S::zero())
        .map(|(&o, &e)| o as f64 / e.as_f64())
        .collect();
    let rho = spearman_with_index(&ratios);
    let v = match rho.partial_cmp(&0.0) {
        Some(Ordering::Less) => Verdict::Overconfident,
        Some(Ordering::Greater) => Verdict::Underconfident,
        _ => Verdict::Calibrated,
    };
    (stat, v)
}

/// Fixation counts per quantile bin, aggregated over images as raw counts.
pub fn calibration_histogram<S: Scalar>(
    model: &DensityMap<S>,
    fixations: &FixationSet,
    k: usize,
) -> Result<CalibrationHistogram<S>> {
    check_bins(k)?;
    let groups: Vec<(&str, Vec<&Fixation>)> = fixations.by_image().into_iter().collect();
    let per_image: Vec<(Vec<usize>, Vec<S>)> = groups
        .par_iter()
        .map(|(id, fix)| {
            let density = model.get(*id).ok_or_else(|| Error::MissingDensity(id.to_string()))?;
            let partition = quantile_partition(density, k)?;
            let masses = bin_masses(density, &partition, k);
            let mut counts = vec![0usize; k];
            for f in fix {
                let (row, col) = pixel_in(density, f)?;
                counts[partition[density.index(row, col)]] += 1;
            }
            Ok((counts, masses))
        })
        .collect::<Result<_>>()?;
    let mut bins = vec![0usize; k];
    let mut expected = vec![S::zero(); k];
    let mut mass_sum = vec![S::zero(); k];
    let mut n = 0;
    for ((counts, masses), (_, fix)) in per_image.iter().zip(&groups) {
        let n_img = S::from_usize_lossy(fix.len());
        for j in 0..k {
            bins[j] += counts[j];
            expected[j] += n_img * masses[j];
            mass_sum[j] += masses[j];
        }
        n += fix.len();
    }
    if n == 0 {
        return Err(Error::NoFixations);
    }
    let n_images = S::from_usize_lossy(per_image.len());
    let bin_masses = mass_sum.into_iter().map(|m| m / n_images).collect();
    let (chi_square, verdict) = verdict(&bins, &expected);
    Ok(CalibrationHistogram { bins, bin_masses, expected, n_fixations: n, chi_square, verdict })
}

/// Per-image partitions, keyed by image id.
pub fn partitions<S: Scalar>(model: &DensityMap<S>, k: usize) -> Result<BTreeMap<String, Vec<usize>>> {
    model.iter().map(|(id, d)| Ok((id.clone(), quantile_partition(d, k)?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(h: usize, w: usize, values: &[f64]) -> DensityGrid<f64> {
        DensityGrid::normalize(h, w, values).unwrap()
    }

    #[test]
    fn uniform_two_by_two() {
        let g = d(2, 2, &[1.0; 4]);
        assert_eq!(quantile_partition(&g, 2).unwrap(), vec![0, 0, 1, 1]);
    }

    #[test]
    fn greedy_rule_by_hand() {
        let g = d(1, 4, &[0.1, 0.2, 0.3, 0.4]);
        let part = quantile_partition(&g, 2).unwrap();
        assert_eq!(part, vec![0, 0, 0, 1]);
        let m = bin_masses(&g, &part, 2);
        assert!((m[0] - 0.6).abs() < 1e-12 && (m[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn point_mass_is_degenerate() {
        let g = d(1, 4, &[0.0, 0.0, 1.0, 0.0]);
        let part = quantile_partition(&g, 2).unwrap();
        assert_eq!(part[2], 0);
        assert_eq!(bin_masses(&g, &part, 2), vec![1.0, 0.0]);
    }

    #[test]
    fn partition_errors() {
        let g = d(1, 3, &[1.0; 3]);
        assert!(matches!(quantile_partition(&g, 4), Err(Error::TooFewPixels { pixels: 3, bins: 4 })));
        assert!(quantile_partition(&g, 1).is_err());
        assert!(quantile_partition(&d(1, 200, &[1.0; 200]), 101).is_err());
    }

    #[test]
    fn four_bins_on_smooth_density_hold_a_quarter_each() {
        let values: Vec<f64> = (0..400).map(|i| 1.0 + ((i * 37) % 101) as f64).collect();
        let g = d(20, 20, &values);
        let part = quantile_partition(&g, 4).unwrap();
        let masses = bin_masses(&g, &part, 4);
        let max_pixel = g.probs().into_iter().fold(0.0, f64::max);
        for m in masses {
            assert!((m - 0.25).abs() <= max_pixel + 1e-12);
        }
    }

    #[test]
    fn chi_square_examples() {
        let (stat, _) = chi_square(&[100, 0, 0, 0], &[25.0, 25.0, 25.0, 25.0]);
        assert_eq!(stat, 300.0);
        let (stat, v) = verdict(&[25, 25, 25, 25], &[25.0f64; 4]);
        assert_eq!(stat, 0.0);
        assert_eq!(v, Verdict::Calibrated);
        assert_eq!(verdict(&[100, 0, 0, 0], &[25.0f64; 4]).1, Verdict::Overconfident);
        assert_eq!(verdict(&[0, 0, 0, 100], &[25.0f64; 4]).1, Verdict::Underconfident);
        assert!((critical_value(3) - 7.814727903251178).abs() < 1e-9);
    }

    #[test]
    fn uniform_density_all_fixations_in_bin_zero() {
        let g = d(2, 2, &[1.0; 4]);
        let model: DensityMap<f64> = [("a".to_string(), g)].into();
        // bin 0 of a uniform 2x2 with K=4 is pixel 0
        let fix = FixationSet::new((0..100).map(|_| Fixation::new("a", "s", 0.5, 0.5)).collect());
        let h = calibration_histogram(&model, &fix, 4).unwrap();
        assert_eq!(h.bins, vec![100, 0, 0, 0]);
        assert_eq!(h.chi_square, 300.0);
        assert_eq!(h.verdict, Verdict::Overconfident);
        assert_eq!(h.expected, vec![25.0; 4]);
    }

    #[test]
    fn spearman_ties() {
        assert_eq!(spearman_with_index(&[1.0, 1.0, 1.0]), 0.0);
        assert!((spearman_with_index(&[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    }
}
