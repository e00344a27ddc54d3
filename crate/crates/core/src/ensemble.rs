//! Linear opinion pools of predicted densities.
//!
//! Mixtures average probabilities, not log-probabilities. They are computed
//! with a weighted logsumexp so peaked densities do not underflow.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::dataset::{Dataset, DensityMap};
use crate::fixations::FixationSet;
use crate::grid::DensityGrid;
use crate::logspace::weighted_logsumexp;
use crate::metrics::information_gain;
use crate::{Error, Result, Scalar};

/// Tolerance on the weight sum.
pub const WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec<S> {
    members: Vec<(String, S)>,
}

impl<S: Scalar> MixtureSpec<S> {
    pub fn new(members: Vec<(String, S)>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::BadWeights("no members".into()));
        }
        let weights: Vec<S> = members.iter().map(|(_, w)| *w).collect();
        check_weights(&weights)?;
        Ok(Self { members })
    }

    pub fn equal(names: &[String]) -> Result<Self> {
        let w = S::one() / S::from_usize_lossy(names.len().max(1));
        Self::new(names.iter().map(|n| (n.clone(), w)).collect())
    }

    pub fn members(&self) -> &[(String, S)] {
        &self.members
    }

    /// Mixes the named models of a dataset image by image. Only images every
    /// member covers are produced.
    pub fn apply(&self, dataset: &Dataset<S>) -> Result<DensityMap<S>> {
        let models: Vec<&DensityMap<S>> = self
            .members
            .iter()
            .map(|(name, _)| dataset.model(name).ok_or_else(|| Error::InvalidConfig(format!("unknown model {name:?}"))))
            .collect::<Result<_>>()?;
        let weights: Vec<S> = self.members.iter().map(|(_, w)| *w).collect();
        let ids: Vec<&String> = models[0].keys().filter(|id| models.iter().all(|m| m.contains_key(*id))).collect();
        let mixed: Vec<DensityGrid<S>> = ids
            .par_iter()
            .map(|id| {
                let grids: Vec<&DensityGrid<S>> = models.iter().map(|m| &m[*id]).collect();
                mix(&grids, &weights)
            })
            .collect::<Result<_>>()?;
        Ok(ids.into_iter().cloned().zip(mixed).collect())
    }
}

fn check_weights<S: Scalar>(weights: &[S]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::BadWeights("no weights".into()));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < S::zero()) {
        return Err(Error::BadWeights(format!("weight {w} is negative or not finite")));
    }
    let total: S = weights.iter().copied().sum();
    if (total.as_f64() - 1.0).abs() > WEIGHT_TOL {
        return Err(Error::BadWeights(format!("weights sum to {total}")));
    }
    Ok(())
}

/// `p = Σ w_k p_k`, pointwise.
pub fn mix<S: Scalar>(densities: &[&DensityGrid<S>], weights: &[S]) -> Result<DensityGrid<S>> {
    if densities.len() != weights.len() {
        return Err(Error::BadWeights(format!("{} densities but {} weights", densities.len(), weights.len())));
    }
    check_weights(weights)?;
    let shape = densities[0].shape();
    if let Some(d) = densities.iter().find(|d| d.shape() != shape) {
        return Err(Error::ShapeMismatch { expected: shape, got: d.shape() });
    }
    let mut column = vec![S::zero(); densities.len()];
    let log_p = (0..densities[0].len())
        .map(|i| {
            for (c, d) in column.iter_mut().zip(densities) {
                *c = d.log_p()[i];
            }
            weighted_logsumexp(&column, weights)
        })
        .collect();
    DensityGrid::from_log(shape.0, shape.1, log_p)
}

/// IG of `w · A + (1 − w) · B` for `w` on an even grid from 0 to 1. The first
/// entry is model B alone, the last model A alone.
pub fn weight_sweep<S: Scalar>(
    model_a: &DensityMap<S>,
    model_b: &DensityMap<S>,
    baseline: &DensityMap<S>,
    fixations: &FixationSet,
    steps: usize,
) -> Result<Vec<(S, S)>> {
    if steps < 3 {
        return Err(Error::InvalidConfig(format!("weight sweep needs at least 3 steps, got {steps}")));
    }
    let images: Vec<&str> = fixations.by_image().into_keys().collect();
    (0..steps)
        .into_par_iter()
        .map(|i| {
            let w = S::from_usize_lossy(i) / S::from_usize_lossy(steps - 1);
            let weights = [w, S::one() - w];
            let mut mixed = DensityMap::new();
            for id in &images {
                let a = model_a.get(*id).ok_or_else(|| Error::MissingDensity(id.to_string()))?;
                let b = model_b.get(*id).ok_or_else(|| Error::MissingDensity(id.to_string()))?;
                mixed.insert(id.to_string(), mix(&[a, b], &weights)?);
            }
            Ok((w, information_gain(&mixed, baseline, fixations)?.aggregate))
        })
        .collect()
}

/// Density-registry name of one trained instance of a model.
pub fn instance_name(model: &str, index: usize) -> String {
    format!("{model}#{index}")
}

/// Equal-weight mixture of `instances_per_model` instances (`name#0` …) of
/// every listed model, over every registered image.
pub fn build_dsre<S: Scalar>(
    dataset: &Dataset<S>,
    model_names: &[String],
    instances_per_model: usize,
) -> Result<DensityMap<S>> {
    if model_names.is_empty() || instances_per_model == 0 {
        return Err(Error::InvalidConfig("need at least one model and one instance".into()));
    }
    let members: Vec<(String, usize)> = model_names
        .iter()
        .flat_map(|m| (0..instances_per_model).map(move |i| (m.clone(), i)))
        .collect();
    let weight = S::one() / S::from_usize_lossy(members.len());
    let weights = vec![weight; members.len()];
    let ids: Vec<&String> = dataset.images().keys().collect();
    let grids: Vec<DensityGrid<S>> = ids
        .par_iter()
        .map(|id| {
            let parts: Vec<&DensityGrid<S>> = members
                .iter()
                .map(|(model, i)| {
                    dataset.model(&instance_name(model, *i)).and_then(|m| m.get(*id)).ok_or_else(|| {
                        Error::MissingInstance { model: model.clone(), instance: *i, image_id: id.to_string() }
                    })
                })
                .collect::<Result<_>>()?;
            mix(&parts, &weights)
        })
        .collect::<Result<_>>()?;
    Ok(ids.into_iter().cloned().zip(grids).collect())
}

/// Generalized Jensen–Shannon divergence with equal weights, in bits:
/// `H(mean p_k) − mean H(p_k)`.
pub fn js_divergence<S: Scalar>(densities: &[&DensityGrid<S>]) -> Result<S> {
    if densities.len() < 2 {
        return Err(Error::InvalidConfig("JS divergence needs at least two densities".into()));
    }
    let m = S::from_usize_lossy(densities.len());
    let weights = vec![S::one() / m; densities.len()];
    let mean = mix(densities, &weights)?;
    let mean_entropy = densities.iter().map(|d| d.entropy_bits()).sum::<S>() / m;
    let js = mean.entropy_bits() - mean_entropy;
    Ok(js.max(S::zero()).min(m.log2()))
}

/// Images ranked by JS divergence among the models, largest first, ties by
/// image id. Only images covered by every model are ranked.
pub fn disagreement_ranking<S: Scalar>(models: &[&DensityMap<S>]) -> Result<Vec<(String, S)>> {
    if models.len() < 2 {
        return Err(Error::InvalidConfig("disagreement needs at least two models".into()));
    }
    let ids: Vec<&String> = models[0].keys().filter(|id| models.iter().all(|m| m.contains_key(*id))).collect();
    let mut ranking: Vec<(String, S)> = ids
        .par_iter()
        .map(|id| {
            let grids: Vec<&DensityGrid<S>> = models.iter().map(|m| &m[*id]).collect();
            Ok(((*id).clone(), js_divergence(&grids)?))
        })
        .collect::<Result<_>>()?;
    ranking.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0)));
    Ok(ranking)
}

/// Per-image JS divergence keyed by image id.
pub fn disagreement_by_image<S: Scalar>(models: &[&DensityMap<S>]) -> Result<BTreeMap<String, S>> {
    Ok(disagreement_ranking(models)?.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(values: &[f64]) -> DensityGrid<f64> {
        DensityGrid::normalize(1, values.len(), values).unwrap()
    }

    #[test]
    fn degenerate_weights_return_member_exactly() {
        let a = d(&[0.1, 0.2, 0.7]);
        let b = d(&[0.5, 0.25, 0.25]);
        assert_eq!(mix(&[&a, &b], &[1.0, 0.0]).unwrap(), a);
        assert_eq!(mix(&[&a, &b], &[0.0, 1.0]).unwrap(), b);
    }

    #[test]
    fn idempotent_and_pointwise_average() {
        let a = d(&[0.1, 0.2, 0.7]);
        let m = mix(&[&a, &a], &[0.5, 0.5]).unwrap();
        for (x, y) in m.log_p().iter().zip(a.log_p()) {
            assert!((x - y).abs() < 1e-12);
        }
        let m = mix(&[&d(&[1.0, 0.0]), &d(&[0.0, 1.0])], &[0.5, 0.5]).unwrap();
        assert_eq!(m.probs(), vec![0.5, 0.5]);
    }

    #[test]
    fn mix_errors() {
        let a = d(&[0.5, 0.5]);
        let b = d(&[0.2, 0.3, 0.5]);
        assert!(matches!(mix(&[&a, &b], &[0.5, 0.5]), Err(Error::ShapeMismatch { .. })));
        assert!(matches!(mix(&[&a, &a], &[0.6, 0.6]), Err(Error::BadWeights(_))));
        assert!(matches!(mix(&[&a, &a], &[1.5, -0.5]), Err(Error::BadWeights(_))));
        assert!(matches!(mix(&[&a], &[0.5, 0.5]), Err(Error::BadWeights(_))));
        assert!(MixtureSpec::<f64>::new(vec![]).is_err());
    }

    #[test]
    fn js_examples() {
        let a = d(&[1.0, 0.0]);
        let b = d(&[0.0, 1.0]);
        assert_eq!(js_divergence(&[&a, &b]).unwrap(), 1.0);
        let c = d(&[0.3, 0.7]);
        assert_eq!(js_divergence(&[&c, &c, &c]).unwrap(), 0.0);
    }

    #[test]
    fn ranking_orders_and_breaks_ties() {
        let same = d(&[0.3, 0.7]);
        let a = d(&[1.0, 0.0]);
        let b = d(&[0.0, 1.0]);
        let m1: DensityMap<f64> = [("x".into(), same.clone()), ("y".into(), a.clone()), ("z".into(), same.clone())].into();
        let m2: DensityMap<f64> = [("x".into(), same.clone()), ("y".into(), b), ("z".into(), same)].into();
        let r = disagreement_ranking(&[&m1, &m2]).unwrap();
        assert_eq!(r.iter().map(|(id, _)| id.as_str()).collect::<Vec<_>>(), vec!["y", "x", "z"]);
        assert_eq!(r[0].1, 1.0);
        assert!(disagreement_ranking(&[&m1]).is_err());
    }

    #[test]
    fn dsre_single_instance_is_plain_mix() {
        let mut ds = Dataset::<f64>::new();
        ds.register_image("i", 1, 3).unwrap();
        let grids = [d(&[0.1, 0.2, 0.7]), d(&[0.3, 0.3, 0.4]), d(&[0.6, 0.2, 0.2]), d(&[0.2, 0.5, 0.3])];
        let names: Vec<String> = ["a", "b", "c", "e"].iter().map(|s| s.to_string()).collect();
        for (name, g) in names.iter().zip(&grids) {
            ds.insert_density(instance_name(name, 0), "i", g.clone()).unwrap();
        }
        let dsre = build_dsre(&ds, &names, 1).unwrap();
        let refs: Vec<&DensityGrid<f64>> = grids.iter().collect();
        let direct = mix(&refs, &[0.25; 4]).unwrap();
        for (x, y) in dsre["i"].log_p().iter().zip(direct.log_p()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(
            build_dsre(&ds, &names, 2),
            Err(Error::MissingInstance { model: "a".into(), instance: 1, image_id: "i".into() })
        );
    }
}
