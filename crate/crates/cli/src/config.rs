//! Run configuration and dataset assembly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gazekit::baselines::KdeSpec;
use gazekit::dataset::{read_image_table, DensityMap};
use gazekit::fixations::read_fixations;
use gazekit::io::{read_density, read_features};
use gazekit::metrics::{Metric, DEFAULT_EMPIRICAL_SIGMA};
use gazekit::readout::{FeatureVolume, TrainConfig, DEFAULT_FOLDS};
use gazekit::Dataset;
use serde::Deserialize;

use crate::error::{CliError, CliResult, Context};

pub const DENSITY_EXT: &str = "fdf";
pub const FEATURE_EXT: &str = "ffv";

/// JSON run configuration. Paths are relative to the config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub fixations: PathBuf,
    /// CSV `image_id,height,width`; when absent, dimensions come from the
    /// density and feature files.
    #[serde(default)]
    pub images: Option<PathBuf>,
    /// Model name to directory of `<image_id>.fdf` files.
    #[serde(default)]
    pub models: BTreeMap<String, PathBuf>,
    /// Directory of `<image_id>.ffv` feature volumes.
    #[serde(default)]
    pub features: Option<PathBuf>,
    /// Model to use as the IG baseline instead of the KDE center bias.
    #[serde(default)]
    pub baseline: Option<String>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<String>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub kde: KdeConfig,
    #[serde(default = "default_empirical_sigma")]
    pub empirical_sigma: f64,
    #[serde(default)]
    pub mixture: Option<MixtureConfig>,
    #[serde(default)]
    pub crossvalidate_cb: bool,
    #[serde(default)]
    pub fold_seed: u64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    pub output: PathBuf,
    #[serde(default)]
    pub train: TrainSection,
}

fn default_metrics() -> Vec<String> {
    Metric::TABLE.iter().map(|m| m.name().to_string()).collect()
}

fn default_k() -> usize {
    gazekit::calibration::DEFAULT_BINS
}

fn default_empirical_sigma() -> f64 {
    DEFAULT_EMPIRICAL_SIGMA
}

fn default_folds() -> usize {
    DEFAULT_FOLDS
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KdeConfig {
    pub bandwidth: f64,
    pub bandwidth_grid: Vec<f64>,
    pub regularizer_eps: f64,
}

impl Default for KdeConfig {
    fn default() -> Self {
        let spec = KdeSpec::<f64>::default();
        Self { bandwidth: spec.bandwidth, bandwidth_grid: spec.bandwidth_grid, regularizer_eps: spec.regularizer_eps }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureConfig {
    #[serde(default = "default_mixture_name")]
    pub name: String,
    pub members: BTreeMap<String, f64>,
}

fn default_mixture_name() -> String {
    "mixture".into()
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    /// Full layer widths starting with the channel count; defaults to
    /// `[C, 16, 32, 2, 1]`.
    pub widths: Option<Vec<usize>>,
    pub model_seed: u64,
    pub schedule: TrainConfig,
}

/// A loaded configuration: validated settings plus the assembled dataset.
pub struct Workspace {
    pub config: RunConfig,
    pub config_path: PathBuf,
    pub root: PathBuf,
    pub dataset: Dataset,
    pub metrics: Vec<Metric>,
    pub kde: KdeSpec<f64>,
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

/// Files with extension `ext` in `dir`, as `(stem, path)` sorted by stem.
fn list_files(dir: &Path, ext: &str) -> CliResult<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some(ext) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.push((stem.to_string(), path));
        }
    }
    out.sort();
    Ok(out)
}

pub fn read_density_dir(dir: &Path) -> CliResult<DensityMap<f64>> {
    list_files(dir, DENSITY_EXT)?
        .into_iter()
        .map(|(id, path)| {
            let density = read_density(&read_bytes(&path)?).context(|| path.display().to_string())?;
            Ok((id, density))
        })
        .collect()
}

pub fn read_feature_dir(dir: &Path) -> CliResult<BTreeMap<String, FeatureVolume<f64>>> {
    list_files(dir, FEATURE_EXT)?
        .into_iter()
        .map(|(id, path)| {
            let fv = read_features(&read_bytes(&path)?).context(|| path.display().to_string())?;
            Ok((id, fv))
        })
        .collect()
}

impl Workspace {
    pub fn load(config_path: &Path) -> CliResult<Self> {
        let text = read_text(config_path)?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config { path: config_path.into(), message: e.to_string() })?;
        let root = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
        let bad = |message: String| CliError::Config { path: config_path.into(), message };

        let metrics = config
            .metrics
            .iter()
            .map(|m| m.parse::<Metric>().map_err(|e| bad(e.to_string())))
            .collect::<CliResult<Vec<_>>>()?;
        let kde = KdeSpec::new(config.kde.bandwidth, config.kde.bandwidth_grid.clone(), config.kde.regularizer_eps)
            .map_err(|e| bad(e.to_string()))?;
        if !(config.empirical_sigma > 0.0) {
            return Err(bad("empirical_sigma must be positive".into()));
        }
        config.train.schedule.validate().map_err(|e| bad(e.to_string()))?;
        for reserved in [crate::report::CENTERBIAS, crate::report::GOLD] {
            if config.models.contains_key(reserved) || config.mixture.as_ref().is_some_and(|m| m.name == reserved) {
                return Err(bad(format!("model name {reserved:?} is reserved")));
            }
        }
        if let Some(m) = &config.mixture {
            if config.models.contains_key(&m.name) {
                return Err(bad(format!("mixture name {:?} collides with a model", m.name)));
            }
            if let Some(missing) = m.members.keys().find(|n| !config.models.contains_key(*n)) {
                return Err(bad(format!("mixture member {missing:?} is not a configured model")));
            }
        }
        if let Some(b) = &config.baseline {
            if !config.models.contains_key(b) {
                return Err(bad(format!("baseline {b:?} is not a configured model")));
            }
        }

        let fixations = read_fixations(&read_text(&root.join(&config.fixations))?)
            .context(|| root.join(&config.fixations).display().to_string())?;
        let models: BTreeMap<String, DensityMap<f64>> = config
            .models
            .iter()
            .map(|(name, dir)| Ok((name.clone(), read_density_dir(&root.join(dir))?)))
            .collect::<CliResult<_>>()?;

        let mut dataset = Dataset::new();
        if let Some(images) = &config.images {
            let path = root.join(images);
            for (id, (h, w)) in read_image_table(&read_text(&path)?).context(|| path.display().to_string())? {
                dataset.register_image(id, h, w).context(|| path.display().to_string())?;
            }
        } else {
            let mut shapes: BTreeMap<String, (usize, usize)> = BTreeMap::new();
            let mut note = |id: &str, shape: (usize, usize), source: &str| -> CliResult<()> {
                match shapes.get(id) {
                    Some(&s) if s != shape => Err(CliError::Data {
                        context: format!("{source}, image {id}"),
                        source: gazekit::Error::ShapeMismatch { expected: s, got: shape },
                    }),
                    _ => {
                        shapes.insert(id.to_string(), shape);
                        Ok(())
                    }
                }
            };
            for (name, map) in &models {
                for (id, d) in map {
                    note(id, d.shape(), name)?;
                }
            }
            if let Some(dir) = &config.features {
                for (id, path) in list_files(&root.join(dir), FEATURE_EXT)? {
                    let fv = read_features::<f64>(&read_bytes(&path)?).context(|| path.display().to_string())?;
                    note(&id, fv.shape(), "features")?;
                }
            }
            for (id, (h, w)) in shapes {
                dataset.register_image(id, h, w).context(|| "image registry".into())?;
            }
        }
        dataset.attach_fixations(fixations).context(|| root.join(&config.fixations).display().to_string())?;
        for (name, map) in models {
            for (id, density) in map {
                dataset.insert_density(name.clone(), &id, density).context(|| format!("model {name}, image {id}"))?;
            }
        }
        Ok(Self { config, config_path: config_path.into(), root, dataset, metrics, kde })
    }

    pub fn output_dir(&self) -> PathBuf {
        self.root.join(&self.config.output)
    }

    pub fn features(&self) -> CliResult<BTreeMap<String, FeatureVolume<f64>>> {
        let dir = self.config.features.as_ref().ok_or_else(|| CliError::Config {
            path: self.config_path.clone(),
            message: "no features directory configured".into(),
        })?;
        read_feature_dir(&self.root.join(dir))
    }
}
