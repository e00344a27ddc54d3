//! Baselines, model lookup and the benchmark table.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use gazekit::baselines::{centerbias, gold_standard, relative_score, CenterBias, GoldStandard};
use gazekit::dataset::DensityMap;
use gazekit::ensemble::MixtureSpec;
use gazekit::metrics::{evaluate_metric, json_number, Metric};
use gazekit::Fixation;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::config::Workspace;
use crate::error::{CliError, CliResult, Context};

/// Row name of the KDE center bias.
pub const CENTERBIAS: &str = "centerbias";
/// Row name of the per-image KDE gold standard.
pub const GOLD: &str = "gold_standard";

/// Center bias per registered image, with the fitted estimators.
pub struct Baseline {
    pub name: String,
    pub densities: DensityMap<f64>,
    /// Fitted estimators keyed by image id; empty when a configured model is
    /// the baseline.
    pub fits: BTreeMap<String, CenterBias<f64>>,
}

/// KDE center bias for every registered image. Without cross-validation one
/// estimate per image shape is fitted on all fixations; with it each image
/// gets an estimate from the other images' fixations.
pub fn fit_centerbias(ws: &Workspace) -> CliResult<Baseline> {
    let images = ws.dataset.images();
    let fixations = ws.dataset.fixations();
    let fits: Vec<(String, CenterBias<f64>)> = if ws.config.crossvalidate_cb {
        images
            .par_iter()
            .map(|(id, &shape)| {
                let train = fixations.filter_images(|other| other != id);
                let cb = centerbias(&train, images, shape, &ws.kde).context(|| format!("center bias for {id}"))?;
                Ok((id.clone(), cb))
            })
            .collect::<CliResult<_>>()?
    } else {
        let mut shapes: Vec<(usize, usize)> = images.values().copied().collect();
        shapes.sort();
        shapes.dedup();
        let by_shape: BTreeMap<(usize, usize), CenterBias<f64>> = shapes
            .par_iter()
            .map(|&shape| {
                let cb = centerbias(fixations, images, shape, &ws.kde).context(|| format!("center bias {shape:?}"))?;
                Ok((shape, cb))
            })
            .collect::<CliResult<_>>()?;
        images.iter().map(|(id, shape)| (id.clone(), by_shape[shape].clone())).collect()
    };
    let densities = fits.iter().map(|(id, cb)| (id.clone(), cb.density.clone())).collect();
    Ok(Baseline { name: CENTERBIAS.into(), densities, fits: fits.into_iter().collect() })
}

/// The configured baseline model, or the fitted center bias.
pub fn baseline(ws: &Workspace) -> CliResult<Baseline> {
    match &ws.config.baseline {
        Some(name) => Ok(Baseline { name: name.clone(), densities: model_densities(ws, name)?, fits: BTreeMap::new() }),
        None => fit_centerbias(ws),
    }
}

/// Gold standard of every image with at least two fixations.
pub fn fit_gold(ws: &Workspace) -> CliResult<BTreeMap<String, GoldStandard<f64>>> {
    let groups: Vec<(String, Vec<Fixation>)> = ws
        .dataset
        .fixations()
        .by_image()
        .into_iter()
        .map(|(id, fix)| (id.to_string(), fix.into_iter().cloned().collect()))
        .collect();
    groups
        .par_iter()
        .map(|(id, fix)| {
            let shape = ws.dataset.dims(id).ok_or_else(|| CliError::Data {
                context: "gold standard".into(),
                source: gazekit::Error::UnknownImage(id.clone()),
            })?;
            let gold = gold_standard(fix, shape, &ws.kde).context(|| format!("gold standard for {id}"))?;
            Ok((id.clone(), gold))
        })
        .collect()
}

/// Densities of a configured model or of the configured mixture.
pub fn model_densities(ws: &Workspace, name: &str) -> CliResult<DensityMap<f64>> {
    if let Some(m) = ws.dataset.model(name) {
        return Ok(m.clone());
    }
    if ws.config.models.contains_key(name) {
        return Ok(DensityMap::new());
    }
    if let Some(mixture) = ws.config.mixture.as_ref().filter(|m| m.name == name) {
        let spec = MixtureSpec::new(mixture.members.iter().map(|(n, w)| (n.clone(), *w)).collect())
            .context(|| format!("mixture {name}"))?;
        return spec.apply(&ws.dataset).context(|| format!("mixture {name}"));
    }
    Err(CliError::Usage(format!("unknown model {name:?}")))
}

/// Configured models followed by the mixture, if any.
pub fn all_models(ws: &Workspace) -> Vec<String> {
    let mut names: Vec<String> = ws.config.models.keys().cloned().collect();
    names.extend(ws.config.mixture.as_ref().map(|m| m.name.clone()));
    names
}

fn metric_columns(ws: &Workspace) -> Vec<Metric> {
    let mut cols = vec![Metric::Ig];
    for m in &ws.metrics {
        if !cols.contains(m) {
            cols.push(*m);
        }
    }
    cols
}

fn score_row(
    ws: &Workspace,
    name: &str,
    densities: &DensityMap<f64>,
    baseline: &DensityMap<f64>,
    columns: &[Metric],
) -> CliResult<BTreeMap<Metric, f64>> {
    let fixations = ws.dataset.fixations();
    columns
        .iter()
        .map(|&metric| {
            let report = evaluate_metric(metric, densities, baseline, fixations, ws.dataset.images(), ws.config.empirical_sigma)
                .context(|| format!("{metric} of {name}"))?;
            Ok((metric, report.aggregate))
        })
        .collect()
}

/// Benchmark table: one row per model, mixture, center bias and gold
/// standard, each metric scored on its metric-optimal map. Rows are sorted
/// by IG, largest first, ties by name.
pub fn full_report(ws: &Workspace) -> CliResult<Value> {
    let columns = metric_columns(ws);
    let base = baseline(ws)?;
    let mut rows: Vec<(String, BTreeMap<Metric, f64>)> = Vec::new();
    for name in all_models(ws) {
        let densities = model_densities(ws, &name)?;
        rows.push((name.clone(), score_row(ws, &name, &densities, &base.densities, &columns)?));
    }
    if ws.config.baseline.is_none() {
        rows.push((CENTERBIAS.into(), score_row(ws, CENTERBIAS, &base.densities, &base.densities, &columns)?));
    }

    let gold = fit_gold(ws)?;
    let gold_densities: DensityMap<f64> = gold.iter().map(|(id, g)| (id.clone(), g.density.clone())).collect();
    let mut gold_row = score_row(ws, GOLD, &gold_densities, &base.densities, &columns)?;
    // fixations are scored leave-one-out against their own image's estimate
    let (mut gain, mut n) = (0.0, 0usize);
    for (id, g) in &gold {
        let b = &base.densities[id];
        let pixels = ws.dataset.fixations().pixels_for(id);
        let base_bits: f64 = pixels.iter().map(|&(r, c)| b.log_at(r, c)).sum::<f64>() / std::f64::consts::LN_2;
        gain += g.loo_log2_sum() - base_bits;
        n += pixels.len();
    }
    let gold_ig = gain / n as f64;
    gold_row.insert(Metric::Ig, gold_ig);
    rows.push((GOLD.into(), gold_row));

    rows.sort_by(|a, b| b.1[&Metric::Ig].partial_cmp(&a.1[&Metric::Ig]).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0)));
    let table: Vec<Value> = rows
        .iter()
        .map(|(name, scores)| {
            let mut row = Map::new();
            row.insert("model".into(), Value::String(name.clone()));
            for m in &columns {
                row.insert(m.name().into(), json_number(scores[m]));
            }
            let relative = relative_score(scores[&Metric::Ig], gold_ig).map(json_number).unwrap_or(Value::Null);
            row.insert("relative_score".into(), relative);
            Value::Object(row)
        })
        .collect();
    Ok(json!({
        "baseline": base.name,
        "columns": columns.iter().map(|m| m.name()).collect::<Vec<_>>(),
        "n_images": ws.dataset.fixations().by_image().len(),
        "n_fixations": ws.dataset.fixations().len(),
        "rows": table,
    }))
}
