//! Seeded synthetic dataset for trying the CLI end to end.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gazekit::dataset::write_image_table;
use gazekit::fixations::write_fixations;
use gazekit::io::{write_density, write_features};
use gazekit::readout::{synth_features, SynthSpec};
use gazekit::sampling::{sample_fixations, seeded_rng};
use gazekit::{DensityGrid, FixationSet};
use rand::Rng;
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::output::{to_json, write_atomic};

#[derive(Debug, Clone)]
pub struct DemoSpec {
    pub images: usize,
    pub size: usize,
    pub channels: usize,
    pub fixations_per_image: usize,
    pub seed: u64,
}

impl Default for DemoSpec {
    fn default() -> Self {
        Self { images: 12, size: 24, channels: 4, fixations_per_image: 60, seed: 7 }
    }
}

fn power(d: &DensityGrid<f64>, gamma: f64) -> DensityGrid<f64> {
    let (h, w) = d.shape();
    DensityGrid::from_logits(h, w, d.log_p().iter().map(|l| gamma * l).collect()).expect("finite logits")
}

fn jitter(d: &DensityGrid<f64>, amount: f64, rng: &mut impl Rng) -> DensityGrid<f64> {
    let (h, w) = d.shape();
    DensityGrid::from_logits(h, w, d.log_p().iter().map(|l| l + amount * rng.random_range(-1.0..1.0)).collect())
        .expect("finite logits")
}

fn write_model(root: &Path, name: &str, densities: &BTreeMap<String, DensityGrid<f64>>) -> CliResult<()> {
    for (id, d) in densities {
        write_atomic(&root.join("models").join(name).join(format!("{id}.fdf")), &write_density(d))?;
    }
    Ok(())
}

/// Writes images, fixations, feature volumes, several model variants and a
/// `config.json` under `root`; returns the config path.
///
/// Models: `truth` (the generating density), `sharp` (squared and
/// renormalized), `flat` (square root), and three noisy instances each of
/// `a` and `b`.
pub fn write_demo(root: &Path, spec: &DemoSpec) -> CliResult<PathBuf> {
    let synth = SynthSpec { channels: spec.channels, height: spec.size, width: spec.size, ..SynthSpec::default() };
    let mut rng = seeded_rng(spec.seed);
    let mut images = BTreeMap::new();
    let mut fixations = FixationSet::default();
    let mut models: BTreeMap<String, BTreeMap<String, DensityGrid<f64>>> = BTreeMap::new();
    for i in 0..spec.images {
        let id = format!("img{i:03}");
        let sample = synth_features::<f64>(&synth, spec.seed * 1000 + i as u64).map_err(|e| CliError::Data { context: "demo".into(), source: e })?;
        images.insert(id.clone(), (spec.size, spec.size));
        for s in 0..spec.fixations_per_image {
            let subject = format!("s{}", s % 5);
            fixations.push(sample_fixations(&id, &subject, &sample.density, 1, &mut rng).remove(0));
        }
        write_atomic(&root.join("features").join(format!("{id}.ffv")), &write_features(&sample.features))?;
        let mut put = |name: String, d: DensityGrid<f64>| {
            models.entry(name).or_default().insert(id.clone(), d);
        };
        put("sharp".into(), power(&sample.density, 2.0));
        put("flat".into(), power(&sample.density, 0.5));
        for k in 0..3 {
            put(format!("a#{k}"), jitter(&sample.density, 1.5, &mut rng));
            put(format!("b#{k}"), jitter(&power(&sample.density, 0.8), 1.5, &mut rng));
        }
        put("truth".into(), sample.density);
    }
    write_atomic(&root.join("images.csv"), write_image_table(&images).as_bytes())?;
    write_atomic(&root.join("fixations.csv"), write_fixations(&fixations).as_bytes())?;
    for (name, densities) in &models {
        write_model(root, name, densities)?;
    }
    let model_dirs: BTreeMap<&String, String> = models.keys().map(|n| (n, format!("models/{n}"))).collect();
    let config = json!({
        "fixations": "fixations.csv",
        "images": "images.csv",
        "models": model_dirs,
        "features": "features",
        "metrics": ["IG", "AUC", "sAUC", "NSS", "CC", "KLDiv", "SIM"],
        "k": 4,
        "mixture": {"name": "sharp_flat", "members": {"sharp": 0.5, "flat": 0.5}},
        "fold_seed": 1,
        "folds": 4,
        "output": "out",
        "train": {
            "widths": [spec.channels, 4, 1],
            "model_seed": 3,
            "schedule": {"initial_lr": 0.01, "decay_factor": 10.0, "milestones": [3], "epochs": 4, "batch_size": 2, "seed": 5, "momentum": 0.9}
        }
    });
    let path = root.join("config.json");
    write_atomic(&path, &to_json(&config))?;
    Ok(path)
}
