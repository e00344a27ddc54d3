//! Information gain and the classic saliency metrics.
//!
//! Fixation-level metrics (IG, LL, AUC, sAUC, NSS) aggregate over all
//! fixations; distribution-level metrics (CC, KLDiv, SIM) average per image.
//! Per-image work may run in parallel but every reduction walks images in
//! sorted id order, so results do not depend on the thread count.

mod auc;
mod classic;
mod likelihood;
mod optimal;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

pub use auc::{auc, mann_whitney_auc, sauc, shuffled_pool};
pub use classic::{cc, kldiv, nss, sim, KLDIV_EPS};
pub use likelihood::{information_gain, log_likelihood, per_image_ig_difference, IgDifference};
pub use optimal::{optimal_saliency_map, SAUC_CLAMP};

use crate::fixations::{Fixation, FixationSet};
use crate::baselines::empirical_map;
use crate::dataset::DensityMap;
use crate::grid::{DensityGrid, SaliencyMap};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Ig,
    Ll,
    Auc,
    Sauc,
    Nss,
    Cc,
    KlDiv,
    Sim,
}

impl Metric {
    /// Columns of the benchmark table, in order.
    pub const TABLE: [Metric; 7] =
        [Metric::Ig, Metric::Auc, Metric::Sauc, Metric::Nss, Metric::Cc, Metric::KlDiv, Metric::Sim];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Ig => "IG",
            Metric::Ll => "LL",
            Metric::Auc => "AUC",
            Metric::Sauc => "sAUC",
            Metric::Nss => "NSS",
            Metric::Cc => "CC",
            Metric::KlDiv => "KLDiv",
            Metric::Sim => "SIM",
        }
    }

    pub fn units(self) -> &'static str {
        match self {
            Metric::Ig | Metric::Ll => "bits/fixation",
            _ => "dimensionless",
        }
    }

    /// Whether the aggregate weights images by their fixation count.
    pub fn fixation_weighted(self) -> bool {
        !matches!(self, Metric::Cc | Metric::KlDiv | Metric::Sim)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "ig" => Metric::Ig,
            "ll" => Metric::Ll,
            "auc" => Metric::Auc,
            "sauc" => Metric::Sauc,
            "nss" => Metric::Nss,
            "cc" => Metric::Cc,
            "kldiv" | "kl" => Metric::KlDiv,
            "sim" => Metric::Sim,
            other => return Err(Error::InvalidConfig(format!("unknown metric {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport<S> {
    pub metric: Metric,
    pub per_image: BTreeMap<String, S>,
    pub aggregate: S,
    pub n_fixations: usize,
}

impl<S: Scalar> MetricReport<S> {
    pub fn to_json(&self) -> serde_json::Value {
        let per_image: serde_json::Map<String, serde_json::Value> =
            self.per_image.iter().map(|(k, v)| (k.clone(), json_number(v.as_f64()))).collect();
        serde_json::json!({
            "metric": self.metric.name(),
            "aggregate": json_number(self.aggregate.as_f64()),
            "per_image": per_image,
            "n_fixations": self.n_fixations,
        })
    }
}

/// Finite numbers as JSON numbers, everything else as `null`.
pub fn json_number(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(v).map_or(serde_json::Value::Null, serde_json::Value::Number)
}

/// Fixations grouped by image with their record index kept for error reports.
pub(crate) fn pixel_in<S: Scalar>(
    density: &DensityGrid<S>,
    f: &Fixation,
) -> Result<(usize, usize)> {
    let (row, col) = f.pixel();
    let inside = f.x >= 0.0 && f.y >= 0.0 && row < density.height() && col < density.width();
    if !inside {
        return Err(Error::OutOfBounds {
            record: 0,
            image_id: f.image_id.clone(),
            x: f.x,
            y: f.y,
            height: density.height(),
            width: density.width(),
        });
    }
    Ok((row, col))
}

pub(crate) fn check_pixels<S: Scalar>(map: &SaliencyMap<S>, pixels: &[(usize, usize)]) -> Result<()> {
    for &(row, col) in pixels {
        if row >= map.height() || col >= map.width() {
            return Err(Error::OutOfBounds {
                record: 0,
                image_id: String::new(),
                x: col as f64,
                y: row as f64,
                height: map.height(),
                width: map.width(),
            });
        }
    }
    Ok(())
}

/// Fixation-weighted report for a per-image metric on saliency maps.
fn fixation_weighted_report<S: Scalar>(
    metric: Metric,
    fixations: &FixationSet,
    mut per_image_score: impl FnMut(&str, &[(usize, usize)]) -> Result<S>,
) -> Result<MetricReport<S>> {
    let mut per_image = BTreeMap::new();
    let mut weighted = S::zero();
    let mut n = 0usize;
    for (image_id, fix) in fixations.by_image() {
        let pixels: Vec<(usize, usize)> = fix.iter().map(|f| f.pixel()).collect();
        let score = per_image_score(image_id, &pixels)?;
        weighted += score * S::from_usize_lossy(pixels.len());
        n += pixels.len();
        per_image.insert(image_id.to_string(), score);
    }
    if n == 0 {
        return Err(Error::NoFixations);
    }
    Ok(MetricReport { metric, per_image, aggregate: weighted / S::from_usize_lossy(n), n_fixations: n })
}

fn lookup<'a, T>(maps: &'a BTreeMap<String, T>, image_id: &str) -> Result<&'a T> {
    maps.get(image_id).ok_or_else(|| Error::MissingDensity(image_id.to_string()))
}

/// AUC over every image with fixations, fixation-weighted.
pub fn auc_report<S: Scalar>(
    maps: &BTreeMap<String, SaliencyMap<S>>,
    fixations: &FixationSet,
) -> Result<MetricReport<S>> {
    fixation_weighted_report(Metric::Auc, fixations, |id, px| auc(lookup(maps, id)?, px))
}

/// Shuffled AUC; the nonfixation pool of each image is every fixation on
/// every other image, mapped by relative position.
pub fn sauc_report<S: Scalar>(
    maps: &BTreeMap<String, SaliencyMap<S>>,
    fixations: &FixationSet,
    dims: &BTreeMap<String, (usize, usize)>,
) -> Result<MetricReport<S>> {
    fixation_weighted_report(Metric::Sauc, fixations, |id, px| {
        let map = lookup(maps, id)?;
        let pool = shuffled_pool(fixations, dims, id, map.shape())?;
        sauc(map, px, &pool)
    })
}

pub fn nss_report<S: Scalar>(
    maps: &BTreeMap<String, SaliencyMap<S>>,
    fixations: &FixationSet,
) -> Result<MetricReport<S>> {
    fixation_weighted_report(Metric::Nss, fixations, |id, px| nss(lookup(maps, id)?, px))
}

/// CC, KLDiv or SIM against per-image empirical densities, averaged over the
/// images that have fixations.
pub fn distribution_report<S: Scalar>(
    metric: Metric,
    maps: &BTreeMap<String, SaliencyMap<S>>,
    empirical: &BTreeMap<String, DensityGrid<S>>,
    fixations: &FixationSet,
) -> Result<MetricReport<S>> {
    let score: fn(&SaliencyMap<S>, &DensityGrid<S>) -> Result<S> = match metric {
        Metric::Cc => cc,
        Metric::KlDiv => kldiv,
        Metric::Sim => sim,
        other => return Err(Error::InvalidConfig(format!("{other} is not a distribution metric"))),
    };
    let groups = fixations.by_image();
    let mut per_image = BTreeMap::new();
    let mut total = S::zero();
    let mut n = 0;
    for (image_id, fix) in &groups {
        let v = score(lookup(maps, image_id)?, lookup(empirical, image_id)?)?;
        total += v;
        n += fix.len();
        per_image.insert(image_id.to_string(), v);
    }
    if per_image.is_empty() {
        return Err(Error::NoFixations);
    }
    let aggregate = total / S::from_usize_lossy(per_image.len());
    Ok(MetricReport { metric, per_image, aggregate, n_fixations: n })
}

/// Default width of the Gaussian used for empirical maps, in pixels.
pub const DEFAULT_EMPIRICAL_SIGMA: f64 = 2.0;

/// Scores `model` under `metric` on the images that have fixations, using
/// the metric-optimal saliency map. IG is measured against `baseline`.
pub fn evaluate_metric<S: Scalar>(
    metric: Metric,
    model: &DensityMap<S>,
    baseline: &DensityMap<S>,
    fixations: &FixationSet,
    dims: &BTreeMap<String, (usize, usize)>,
    empirical_sigma: S,
) -> Result<MetricReport<S>> {
    let fixated: BTreeMap<&str, Vec<&Fixation>> = fixations.by_image();
    let restricted: DensityMap<S> = fixated
        .keys()
        .map(|id| Ok((id.to_string(), lookup(model, id)?.clone())))
        .collect::<Result<_>>()?;
    match metric {
        Metric::Ig => information_gain(&restricted, baseline, fixations),
        Metric::Ll => log_likelihood(&restricted, fixations),
        Metric::Auc => auc_report(&optimal_saliency_map(&restricted, metric, empirical_sigma)?, fixations),
        Metric::Nss => nss_report(&optimal_saliency_map(&restricted, metric, empirical_sigma)?, fixations),
        Metric::Sauc => sauc_report(&optimal_saliency_map(&restricted, metric, empirical_sigma)?, fixations, dims),
        Metric::Cc | Metric::KlDiv | Metric::Sim => {
            let maps = optimal_saliency_map(&restricted, metric, empirical_sigma)?;
            let empirical: BTreeMap<String, DensityGrid<S>> = fixated
                .iter()
                .map(|(id, fix)| {
                    let shape = lookup(model, id)?.shape();
                    let pixels: Vec<(usize, usize)> = fix.iter().map(|f| f.pixel()).collect();
                    Ok((id.to_string(), empirical_map(&pixels, shape, empirical_sigma)?))
                })
                .collect::<Result<_>>()?;
            distribution_report(metric, &maps, &empirical, fixations)
        }
    }
}
