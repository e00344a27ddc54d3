//! Subcommand definitions and their implementations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gazekit::calibration::{calibration_histogram, critical_value};
use gazekit::dataset::DensityMap;
use gazekit::ensemble::{build_dsre, disagreement_by_image, disagreement_ranking, instance_name, weight_sweep, MixtureSpec};
use gazekit::io::write_density;
use gazekit::metrics::{evaluate_metric, information_gain, json_number, Metric};
use gazekit::readout::{
    image_samples, make_folds, train, write_checkpoint, FeatureVolume, ReadoutModel, Role,
};
use gazekit::baselines;
use serde_json::{json, Map, Value};

use crate::config::{Workspace, DENSITY_EXT};
use crate::error::{CliError, CliResult, Context};
use crate::output::{write_atomic, write_json};
use crate::report::{all_models, baseline, fit_centerbias, fit_gold, full_report, model_densities};

#[derive(Debug, Parser)]
#[command(name = "gazekit", version, about = "Evaluate, mix, calibrate and train fixation-density models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// Run configuration (JSON).
    #[arg(long, short = 'c')]
    pub config: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score models with the configured metrics.
    Evaluate(EvaluateArgs),
    /// Fit the center bias and gold standard and write them as density files.
    Baseline(BaselineArgs),
    /// Mix model densities.
    Ensemble(EnsembleArgs),
    /// Confidence-calibration histogram of one model.
    Calibrate(CalibrateArgs),
    /// Rank images by disagreement among models.
    Disagree(DisagreeArgs),
    /// IG of two-model mixtures over a weight grid.
    Sweep(SweepArgs),
    /// Train the readout head on feature volumes.
    Train(TrainArgs),
    /// Write the cross-validation fold assignment.
    Folds(FoldsArgs),
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Metrics to compute (repeatable or comma separated); defaults to the config.
    #[arg(long, value_delimiter = ',')]
    pub metric: Vec<String>,
    /// Models to score; defaults to every configured model and the mixture.
    #[arg(long, value_delimiter = ',')]
    pub model: Vec<String>,
    /// Write the full benchmark table instead of per-metric reports.
    #[arg(long)]
    pub full: bool,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Fit each image's center bias on the other images only.
    #[arg(long)]
    pub crossvalidate_cb: bool,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Mixture weights as name=weight pairs.
    #[arg(long, value_delimiter = ',', conflicts_with = "dsre", required_unless_present = "dsre")]
    pub weights: Vec<String>,
    /// Equal mixture of this many instances (`name#0`, ...) per model.
    #[arg(long, requires = "models")]
    pub dsre: Option<usize>,
    /// Base model names for `--dsre`.
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
    /// Name of the output mixture.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Number of equal-mass bins; defaults to the config.
    #[arg(short = 'k', long = "bins")]
    pub k: Option<usize>,
    /// Model to calibrate; required when several are configured.
    #[arg(long)]
    pub model: Option<String>,
    /// Also write a CSV of bar heights.
    #[arg(long)]
    pub plot_data: bool,
}

#[derive(Debug, Args)]
pub struct DisagreeArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Models to compare; defaults to every configured model.
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
    #[arg(long)]
    pub plot_data: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// The two models, `a,b`; the weight is on `a`.
    #[arg(long, value_delimiter = ',', num_args = 1, required = true)]
    pub models: Vec<String>,
    #[arg(long, default_value_t = 11)]
    pub steps: usize,
    #[arg(long)]
    pub plot_data: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Cross-validation rotation; without it every image is used for training.
    #[arg(long)]
    pub rotation: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FoldsArgs {
    #[command(flatten)]
    pub config: ConfigArg,
}

pub fn execute(command: Command) -> CliResult<Vec<u8>> {
    match command {
        Command::Evaluate(a) => evaluate(a),
        Command::Baseline(a) => run_baseline(a),
        Command::Ensemble(a) => ensemble(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Disagree(a) => disagree(a),
        Command::Sweep(a) => sweep(a),
        Command::Train(a) => run_train(a),
        Command::Folds(a) => folds(a),
    }
}

fn write_densities(dir: &Path, densities: &DensityMap<f64>) -> CliResult<()> {
    for (id, d) in densities {
        write_atomic(&dir.join(format!("{id}.{DENSITY_EXT}")), &write_density(d))?;
    }
    Ok(())
}

fn ig_report(ws: &Workspace, model: &DensityMap<f64>, base: &DensityMap<f64>, name: &str) -> CliResult<gazekit::metrics::MetricReport<f64>> {
    let fixated: BTreeSet<&str> = ws.dataset.fixations().by_image().into_keys().collect();
    let restricted: DensityMap<f64> =
        model.iter().filter(|(id, _)| fixated.contains(id.as_str())).map(|(id, d)| (id.clone(), d.clone())).collect();
    information_gain(&restricted, base, ws.dataset.fixations()).context(|| format!("IG of {name}"))
}

fn evaluate(args: EvaluateArgs) -> CliResult<Vec<u8>> {
    let mut ws = Workspace::load(&args.config.config)?;
    if !args.metric.is_empty() {
        ws.metrics = args
            .metric
            .iter()
            .map(|m| m.parse::<Metric>().map_err(|e| CliError::Usage(format!("--metric: {e}"))))
            .collect::<CliResult<_>>()?;
    }
    let names = if args.model.is_empty() { all_models(&ws) } else { args.model.clone() };
    if args.full {
        let report = full_report(&ws)?;
        return write_json(&ws.output_dir().join("report.json"), &report);
    }
    let base = baseline(&ws)?;
    let mut models = Map::new();
    for name in &names {
        let densities = model_densities(&ws, name)?;
        let mut reports = Map::new();
        for &metric in &ws.metrics {
            let report = evaluate_metric(
                metric,
                &densities,
                &base.densities,
                ws.dataset.fixations(),
                ws.dataset.images(),
                ws.config.empirical_sigma,
            )
            .context(|| format!("{metric} of {name}"))?;
            reports.insert(metric.name().into(), report.to_json());
        }
        models.insert(name.clone(), Value::Object(reports));
    }
    let doc = json!({ "baseline": base.name, "models": models });
    write_json(&ws.output_dir().join("evaluate.json"), &doc)
}

fn run_baseline(args: BaselineArgs) -> CliResult<Vec<u8>> {
    let mut ws = Workspace::load(&args.config.config)?;
    ws.config.crossvalidate_cb |= args.crossvalidate_cb;
    let out = ws.output_dir().join("baseline");
    let cb = fit_centerbias(&ws)?;
    write_densities(&out.join("centerbias"), &cb.densities)?;
    let gold = fit_gold(&ws)?;
    let gold_densities: DensityMap<f64> = gold.iter().map(|(id, g)| (id.clone(), g.density.clone())).collect();
    write_densities(&out.join("gold_standard"), &gold_densities)?;

    let centerbias: Map<String, Value> = cb
        .fits
        .iter()
        .map(|(id, fit)| {
            let scores: Vec<Value> =
                fit.scores.iter().map(|(s, ll)| json!({"bandwidth": json_number(*s), "log_likelihood": json_number(*ll)})).collect();
            (id.clone(), json!({"bandwidth": json_number(fit.bandwidth), "scores": scores}))
        })
        .collect();
    let mut gold_json = Map::new();
    let (mut gain, mut n) = (0.0, 0usize);
    for (id, g) in &gold {
        let pixels = ws.dataset.fixations().pixels_for(id);
        let b = &cb.densities[id];
        let base_bits: f64 = pixels.iter().map(|&(r, c)| b.log_at(r, c)).sum::<f64>() / std::f64::consts::LN_2;
        let ig = (g.loo_log2_sum() - base_bits) / pixels.len() as f64;
        gain += g.loo_log2_sum() - base_bits;
        n += pixels.len();
        gold_json.insert(
            id.clone(),
            json!({
                "bandwidth": json_number(g.bandwidth),
                "loo_log_likelihood": json_number(g.loo_log_likelihood()),
                "pooled_log_likelihood": json_number(g.pooled_log_likelihood()),
                "information_gain": json_number(ig),
                "n_fixations": pixels.len(),
            }),
        );
    }
    let doc = json!({
        "crossvalidated": ws.config.crossvalidate_cb,
        "centerbias": centerbias,
        "gold_standard": gold_json,
        "gold_information_gain": if n > 0 { json_number(gain / n as f64) } else { Value::Null },
    });
    write_json(&ws.output_dir().join("baseline.json"), &doc)
}

fn parse_weights(items: &[String]) -> CliResult<Vec<(String, f64)>> {
    items
        .iter()
        .map(|item| {
            let (name, w) = item.split_once('=').ok_or_else(|| CliError::Usage(format!("--weights: expected name=weight, got {item:?}")))?;
            let w: f64 = w.parse().map_err(|_| CliError::Usage(format!("--weights: bad weight {w:?}")))?;
            Ok((name.to_string(), w))
        })
        .collect()
}

fn ensemble(args: EnsembleArgs) -> CliResult<Vec<u8>> {
    let ws = Workspace::load(&args.config.config)?;
    let (name, members, mixed): (String, Vec<(String, f64)>, DensityMap<f64>) = match args.dsre {
        Some(k) => {
            let mixed = build_dsre(&ws.dataset, &args.models, k).context(|| "DSRE mixture".into())?;
            let w = 1.0 / (args.models.len() * k) as f64;
            let members = args.models.iter().flat_map(|m| (0..k).map(move |i| (instance_name(m, i), w))).collect();
            (args.name.unwrap_or_else(|| format!("dsre_x{k}")), members, mixed)
        }
        None => {
            let members = parse_weights(&args.weights)?;
            let spec = MixtureSpec::new(members.clone()).map_err(|e| CliError::Usage(format!("--weights: {e}")))?;
            let mixed = spec.apply(&ws.dataset).context(|| "mixture".into())?;
            (args.name.unwrap_or_else(|| "mixture".into()), members, mixed)
        }
    };
    let base = baseline(&ws)?;
    let member_maps: Vec<(String, DensityMap<f64>)> =
        members.iter().map(|(m, _)| Ok((m.clone(), model_densities(&ws, m)?))).collect::<CliResult<_>>()?;
    let mixture_ig = ig_report(&ws, &mixed, &base.densities, &name)?;
    let member_ig: Vec<(String, gazekit::metrics::MetricReport<f64>)> = member_maps
        .iter()
        .map(|(m, d)| Ok((m.clone(), ig_report(&ws, d, &base.densities, m)?)))
        .collect::<CliResult<_>>()?;
    let js = if member_maps.len() >= 2 {
        let refs: Vec<&DensityMap<f64>> = member_maps.iter().map(|(_, d)| d).collect();
        disagreement_by_image(&refs).context(|| "JS divergence".into())?
    } else {
        BTreeMap::new()
    };
    let mut per_image = Map::new();
    for id in mixed.keys() {
        let members_ig: Map<String, Value> = member_ig
            .iter()
            .filter_map(|(m, r)| r.per_image.get(id).map(|v| (m.clone(), json_number(*v))))
            .collect();
        per_image.insert(
            id.clone(),
            json!({
                "js_divergence": js.get(id).map_or(Value::Null, |v| json_number(*v)),
                "ig_mixture": mixture_ig.per_image.get(id).map_or(Value::Null, |v| json_number(*v)),
                "ig_members": members_ig,
            }),
        );
    }
    write_densities(&ws.output_dir().join("ensemble").join(&name), &mixed)?;
    let doc = json!({
        "name": name,
        "baseline": base.name,
        "members": members.iter().map(|(m, w)| json!({"model": m, "weight": json_number(*w)})).collect::<Vec<_>>(),
        "information_gain": {
            "mixture": json_number(mixture_ig.aggregate),
            "members": member_ig.iter().map(|(m, r)| (m.clone(), json_number(r.aggregate))).collect::<Map<_, _>>(),
        },
        "per_image": per_image,
    });
    write_json(&ws.output_dir().join(format!("ensemble_{name}.json")), &doc)
}

fn single_model(ws: &Workspace, model: Option<String>) -> CliResult<String> {
    match model {
        Some(m) => Ok(m),
        None => {
            let names = all_models(ws);
            match names.as_slice() {
                [only] => Ok(only.clone()),
                _ => Err(CliError::Usage(format!("--model is required; choose one of {}", names.join(", ")))),
            }
        }
    }
}

fn calibrate(args: CalibrateArgs) -> CliResult<Vec<u8>> {
    let ws = Workspace::load(&args.config.config)?;
    let k = args.k.unwrap_or(ws.config.k);
    let name = single_model(&ws, args.model)?;
    let densities = model_densities(&ws, &name)?;
    let hist = calibration_histogram(&densities, ws.dataset.fixations(), k)
        .map_err(|e| match e {
            gazekit::Error::InvalidConfig(m) => CliError::Usage(format!("-k: {m}")),
            other => CliError::Data { context: format!("calibration of {name}"), source: other },
        })?;
    let numbers = |v: &[f64]| v.iter().map(|x| json_number(*x)).collect::<Vec<_>>();
    let doc = json!({
        "model": name,
        "k": k,
        "bins": hist.bins,
        "bin_masses": numbers(&hist.bin_masses),
        "expected": numbers(&hist.expected),
        "n_fixations": hist.n_fixations,
        "chi_square": json_number(hist.chi_square),
        "critical_value": json_number(critical_value(k - 1)),
        "verdict": hist.verdict.name(),
    });
    if args.plot_data {
        let mut csv = String::from("bin,observed,expected,bin_mass\n");
        for j in 0..k {
            let _ = writeln!(csv, "{j},{},{:.16e},{:.16e}", hist.bins[j], hist.expected[j], hist.bin_masses[j]);
        }
        write_atomic(&ws.output_dir().join(format!("calibration_{name}.csv")), csv.as_bytes())?;
    }
    write_json(&ws.output_dir().join(format!("calibration_{name}.json")), &doc)
}

fn disagree(args: DisagreeArgs) -> CliResult<Vec<u8>> {
    let ws = Workspace::load(&args.config.config)?;
    let names = if args.models.is_empty() { ws.config.models.keys().cloned().collect() } else { args.models.clone() };
    if names.len() < 2 {
        return Err(CliError::Usage("--models: need at least two models".into()));
    }
    let maps: Vec<DensityMap<f64>> = names.iter().map(|n| model_densities(&ws, n)).collect::<CliResult<_>>()?;
    let refs: Vec<&DensityMap<f64>> = maps.iter().collect();
    let ranking = disagreement_ranking(&refs).context(|| "disagreement".into())?;
    if args.plot_data {
        let mut csv = String::from("image_id,js_divergence\n");
        for (id, v) in &ranking {
            let _ = writeln!(csv, "{id},{v:.16e}");
        }
        write_atomic(&ws.output_dir().join("disagree.csv"), csv.as_bytes())?;
    }
    let doc = json!({
        "models": names,
        "ranking": ranking.iter().map(|(id, v)| json!({"image_id": id, "js_divergence": json_number(*v)})).collect::<Vec<_>>(),
    });
    write_json(&ws.output_dir().join("disagree.json"), &doc)
}

fn sweep(args: SweepArgs) -> CliResult<Vec<u8>> {
    let [a, b] = args.models.as_slice() else {
        return Err(CliError::Usage(format!("--models: expected two models, got {}", args.models.len())));
    };
    if args.steps < 3 {
        return Err(CliError::Usage(format!("--steps: need at least 3, got {}", args.steps)));
    }
    let ws = Workspace::load(&args.config.config)?;
    let base = baseline(&ws)?;
    let (da, db) = (model_densities(&ws, a)?, model_densities(&ws, b)?);
    let curve = weight_sweep(&da, &db, &base.densities, ws.dataset.fixations(), args.steps).context(|| "weight sweep".into())?;
    let best = curve.iter().enumerate().fold(0, |best, (i, p)| if p.1 > curve[best].1 { i } else { best });
    if args.plot_data {
        let mut csv = String::from("weight,information_gain\n");
        for (w, ig) in &curve {
            let _ = writeln!(csv, "{w:.16e},{ig:.16e}");
        }
        write_atomic(&ws.output_dir().join(format!("sweep_{a}_{b}.csv")), csv.as_bytes())?;
    }
    let doc = json!({
        "model_a": a,
        "model_b": b,
        "baseline": base.name,
        "curve": curve.iter().map(|(w, ig)| json!({"weight": json_number(*w), "information_gain": json_number(*ig)})).collect::<Vec<_>>(),
        "best_weight": json_number(curve[best].0),
    });
    write_json(&ws.output_dir().join(format!("sweep_{a}_{b}.json")), &doc)
}

fn subset<T: Clone>(map: &BTreeMap<String, T>, ids: &BTreeSet<String>) -> BTreeMap<String, T> {
    map.iter().filter(|(id, _)| ids.contains(*id)).map(|(id, v)| (id.clone(), v.clone())).collect()
}

fn run_train(args: TrainArgs) -> CliResult<Vec<u8>> {
    let ws = Workspace::load(&args.config.config)?;
    let features = ws.features()?;
    let Some(first) = features.values().next() else {
        return Err(CliError::Config { path: ws.config_path.clone(), message: "features directory holds no .ffv files".into() });
    };
    let shape = first.shape();
    let channels = first.channels();
    if let Some((id, fv)) = features.iter().find(|(_, fv)| fv.shape() != shape || fv.channels() != channels) {
        return Err(CliError::Data {
            context: format!("features of {id}"),
            source: gazekit::Error::ShapeMismatch { expected: shape, got: fv.shape() },
        });
    }
    let ids: Vec<&String> = features.keys().collect();
    let (train_ids, val_ids, test_ids, out): (BTreeSet<String>, BTreeSet<String>, BTreeSet<String>, PathBuf) = match args.rotation {
        Some(r) => {
            if r >= ws.config.folds {
                return Err(CliError::Usage(format!("--rotation: must be below {}", ws.config.folds)));
            }
            let folds = make_folds(&ids, ws.config.folds, ws.config.fold_seed).context(|| "folds".into())?;
            let pick = |role| folds.images(r, role).into_iter().map(String::from).collect();
            (pick(Role::Train), pick(Role::Validation), pick(Role::Test), ws.output_dir().join("train").join(format!("rotation_{r}")))
        }
        None => (ids.iter().map(|s| s.to_string()).collect(), BTreeSet::new(), BTreeSet::new(), ws.output_dir().join("train")),
    };

    let fixations = ws.dataset.fixations();
    let train_fix = fixations.filter_images(|id| train_ids.contains(id));
    let cb = baselines::centerbias(&train_fix, ws.dataset.images(), shape, &ws.kde).context(|| "training center bias".into())?;
    let samples_for = |set: &BTreeSet<String>| -> CliResult<Vec<gazekit::readout::ImageSample<f64>>> {
        let fv: BTreeMap<String, FeatureVolume<f64>> = subset(&features, set);
        image_samples(&fv, &fixations.filter_images(|id| set.contains(id))).context(|| "training samples".into())
    };
    let train_set = samples_for(&train_ids)?;
    let widths = ws.config.train.widths.clone().unwrap_or_else(|| ReadoutModel::<f64>::default_widths(channels));
    let model = ReadoutModel::new(widths, cb.density.clone(), ws.config.train.model_seed).context(|| "readout model".into())?;
    let schedule = &ws.config.train.schedule;
    let (model, trace) = train(model, &train_set, schedule).context(|| "training".into())?;

    let mut baseline_model = model.clone();
    baseline_model.zero_readout();
    baseline_model.alpha = 1.0;
    let mut held_out = Map::new();
    for (label, set) in [("validation", &val_ids), ("test", &test_ids)] {
        let samples = samples_for(set)?;
        if samples.iter().all(|s| s.fixations.is_empty()) {
            continue;
        }
        let nll = model.nll(&samples).context(|| format!("{label} nll"))?;
        let nll_cb = baseline_model.nll(&samples).context(|| format!("{label} nll"))?;
        held_out.insert(label.into(), json!({"nll": json_number(nll), "information_gain": json_number(nll_cb - nll)}));
    }

    let predict: &BTreeSet<String> = if test_ids.is_empty() { &train_ids } else { &test_ids };
    let predictions: DensityMap<f64> = predict
        .iter()
        .map(|id| Ok((id.clone(), model.forward(&features[id]).context(|| format!("prediction for {id}"))?)))
        .collect::<CliResult<_>>()?;
    write_densities(&out.join("densities"), &predictions)?;
    let checkpoint = write_checkpoint(&model, ws.config.train.model_seed, schedule).context(|| "checkpoint".into())?;
    write_atomic(&out.join("checkpoint.gzkr"), &checkpoint)?;
    let mut csv = String::from("epoch,lr,nll\n");
    for r in &trace {
        let _ = writeln!(csv, "{},{:.16e},{:.16e}", r.epoch, r.lr, r.nll);
    }
    write_atomic(&out.join("loss.csv"), csv.as_bytes())?;

    let doc = json!({
        "rotation": args.rotation,
        "widths": model.widths(),
        "epochs": trace.len(),
        "final_nll": trace.last().map_or(Value::Null, |r| json_number(r.nll)),
        "sigma_blur": json_number(model.sigma_blur()),
        "alpha": json_number(model.alpha),
        "centerbias_bandwidth": json_number(cb.bandwidth),
        "images": {
            "train": train_ids,
            "validation": val_ids,
            "test": test_ids,
        },
        "held_out": held_out,
    });
    write_json(&out.join("train.json"), &doc)
}

fn folds(args: FoldsArgs) -> CliResult<Vec<u8>> {
    let ws = Workspace::load(&args.config.config)?;
    let ids: Vec<&String> = ws.dataset.images().keys().collect();
    let folds = make_folds(&ids, ws.config.folds, ws.config.fold_seed).context(|| "folds".into())?;
    let rotations: Vec<Value> = (0..folds.folds())
        .map(|r| {
            json!({
                "rotation": r,
                "test": folds.images(r, Role::Test),
                "validation": folds.images(r, Role::Validation),
                "train": folds.images(r, Role::Train),
            })
        })
        .collect();
    let doc = json!({
        "folds": folds.folds(),
        "seed": ws.config.fold_seed,
        "assignment": folds.assignment().iter().map(|(id, f)| (id.clone(), json!(f))).collect::<Map<_, _>>(),
        "fold_sizes": folds.fold_sizes(),
        "rotations": rotations,
    });
    write_json(&ws.output_dir().join("folds.json"), &doc)
}
