use std::cmp::Ordering;
use std::collections::BTreeMap;

use super::check_pixels;
use crate::fixations::{map_pixel, FixationSet};
use crate::grid::SaliencyMap;
use crate::{Error, Result, Scalar};

/// Tie-aware Mann–Whitney statistic `U / (n_pos · n_neg)`: the probability
/// that a positive outranks a negative, ties counting one half. Counts are
/// accumulated as integers, so the result is exact up to the final division.
pub fn mann_whitney_auc<S: Scalar>(positives: &[S], negatives: &[S]) -> Result<S> {
    if positives.is_empty() {
        return Err(Error::NoFixations);
    }
    if negatives.is_empty() {
        return Err(Error::EmptyNonfixPool);
    }
    let mut sorted = negatives.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    // twice U: 2 per negative strictly below, 1 per tie
    let mut twice_u: u128 = 0;
    for &p in positives {
        let below = sorted.partition_point(|&n| n < p);
        let at_or_below = sorted.partition_point(|&n| n <= p);
        twice_u += 2 * below as u128 + (at_or_below - below) as u128;
    }
    let pairs = 2 * positives.len() as u128 * negatives.len() as u128;
    Ok(S::lit(twice_u as f64 / pairs as f64))
}

/// AUC with the saliency at fixated pixels (with multiplicity) as positives
/// and every pixel of the image as negatives.
pub fn auc<S: Scalar>(saliency: &SaliencyMap<S>, fixated: &[(usize, usize)]) -> Result<S> {
    check_pixels(saliency, fixated)?;
    let positives: Vec<S> = fixated.iter().map(|&(r, c)| saliency.at(r, c)).collect();
    mann_whitney_auc(&positives, saliency.values())
}

/// Shuffled AUC: negatives are the `pool` pixels, typically fixations from
/// other images mapped onto this one (see [`shuffled_pool`]).
pub fn sauc<S: Scalar>(
    saliency: &SaliencyMap<S>,
    fixated: &[(usize, usize)],
    pool: &[(usize, usize)],
) -> Result<S> {
    if pool.is_empty() {
        return Err(Error::EmptyNonfixPool);
    }
    check_pixels(saliency, fixated)?;
    check_pixels(saliency, pool)?;
    let positives: Vec<S> = fixated.iter().map(|&(r, c)| saliency.at(r, c)).collect();
    let negatives: Vec<S> = pool.iter().map(|&(r, c)| saliency.at(r, c)).collect();
    mann_whitney_auc(&positives, &negatives)
}

/// Every fixation of every image other than `target`, mapped onto the target
/// shape by relative position.
pub fn shuffled_pool(
    fixations: &FixationSet,
    dims: &BTreeMap<String, (usize, usize)>,
    target: &str,
    target_shape: (usize, usize),
) -> Result<Vec<(usize, usize)>> {
    let mut pool = Vec::new();
    for f in fixations.records().iter().filter(|f| f.image_id != target) {
        let src = *dims.get(&f.image_id).ok_or_else(|| Error::UnknownImage(f.image_id.clone()))?;
        pool.push(map_pixel(f.pixel(), src, target_shape));
    }
    if pool.is_empty() {
        return Err(Error::EmptyNonfixPool);
    }
    Ok(pool)
}
