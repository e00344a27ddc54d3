use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{pixel_in, Metric, MetricReport};
use crate::dataset::DensityMap;
use crate::fixations::{Fixation, FixationSet};
use crate::{Error, Result, Scalar};

/// Sum of log2-likelihoods of one image's fixations.
fn image_log2_sum<S: Scalar>(model: &DensityMap<S>, image_id: &str, fixations: &[&Fixation]) -> Result<S> {
    let density = model.get(image_id).ok_or_else(|| Error::MissingDensity(image_id.to_string()))?;
    let mut sum = S::zero();
    for f in fixations {
        let (row, col) = pixel_in(density, f)?;
        let l = density.log_at(row, col);
        if l == S::neg_infinity() {
            return Err(Error::ZeroDensityAtFixation { image_id: image_id.to_string(), row, col });
        }
        sum += l;
    }
    Ok(sum.to_bits_from_nats())
}

/// Average log2-likelihood per fixation.
pub fn log_likelihood<S: Scalar>(model: &DensityMap<S>, fixations: &FixationSet) -> Result<MetricReport<S>> {
    let groups: Vec<(&str, Vec<&Fixation>)> = fixations.by_image().into_iter().collect();
    let sums: Vec<S> = groups
        .par_iter()
        .map(|(id, fix)| image_log2_sum(model, id, fix))
        .collect::<Result<_>>()?;
    let n: usize = groups.iter().map(|(_, f)| f.len()).sum();
    if n == 0 {
        return Err(Error::NoFixations);
    }
    let mut per_image = BTreeMap::new();
    let mut total = S::zero();
    for ((id, fix), sum) in groups.iter().zip(&sums) {
        total += *sum;
        per_image.insert(id.to_string(), *sum / S::from_usize_lossy(fix.len()));
    }
    Ok(MetricReport { metric: Metric::Ll, per_image, aggregate: total / S::from_usize_lossy(n), n_fixations: n })
}

/// Information gain over a baseline in bits per fixation. Computed as the
/// difference of the two log-likelihood reports, so `IG = LL(model) −
/// LL(baseline)` holds exactly, per image and in aggregate.
pub fn information_gain<S: Scalar>(
    model: &DensityMap<S>,
    baseline: &DensityMap<S>,
    fixations: &FixationSet,
) -> Result<MetricReport<S>> {
    let m = log_likelihood(model, fixations)?;
    let b = log_likelihood(baseline, fixations)?;
    let per_image = m.per_image.iter().map(|(id, v)| (id.clone(), *v - b.per_image[id])).collect();
    Ok(MetricReport {
        metric: Metric::Ig,
        per_image,
        aggregate: m.aggregate - b.aggregate,
        n_fixations: m.n_fixations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IgDifference<S> {
    pub per_image: BTreeMap<String, S>,
    pub mean: S,
    /// Population standard deviation across images.
    pub std: S,
}

/// Per-image `IG(A) − IG(B)` against a shared baseline.
pub fn per_image_ig_difference<S: Scalar>(
    model_a: &DensityMap<S>,
    model_b: &DensityMap<S>,
    baseline: &DensityMap<S>,
    fixations: &FixationSet,
) -> Result<IgDifference<S>> {
    let a = information_gain(model_a, baseline, fixations)?;
    let b = information_gain(model_b, baseline, fixations)?;
    let per_image: BTreeMap<String, S> =
        a.per_image.iter().map(|(id, v)| (id.clone(), *v - b.per_image[id])).collect();
    let n = S::from_usize_lossy(per_image.len());
    let mean = per_image.values().copied().sum::<S>() / n;
    let var = per_image.values().map(|&v| (v - mean) * (v - mean)).sum::<S>() / n;
    Ok(IgDifference { per_image, mean, std: var.sqrt() })
}
