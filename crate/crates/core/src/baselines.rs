//! Center-bias baseline, per-image KDE gold standard, empirical maps and the
//! percentage score between them.
//!
//! Kernels are isotropic Gaussians evaluated at pixel centers and
//! renormalized over the finite grid; there is no boundary reflection.
//! Bandwidths are picked from a candidate grid by cross-validated
//! log-likelihood, ties going to the smaller bandwidth.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::blur::BlurOperator;
use crate::fixations::{map_point, Fixation, FixationSet};
use crate::grid::DensityGrid;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct KdeSpec<S> {
    /// Fixed bandwidth in pixels, used for empirical maps.
    pub bandwidth: S,
    /// Candidate bandwidths for cross-validated selection, ascending.
    pub bandwidth_grid: Vec<S>,
    /// Weight of the uniform density mixed into every estimate.
    pub regularizer_eps: S,
}

impl<S: Scalar> KdeSpec<S> {
    pub fn new(bandwidth: S, bandwidth_grid: Vec<S>, regularizer_eps: S) -> Result<Self> {
        let spec = Self { bandwidth, bandwidth_grid, regularizer_eps };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |s: S| s > S::zero() && s.is_finite();
        if !positive(self.bandwidth) {
            return Err(Error::InvalidConfig(format!("bandwidth must be positive, got {}", self.bandwidth)));
        }
        if self.bandwidth_grid.is_empty() {
            return Err(Error::InvalidConfig("bandwidth grid is empty".into()));
        }
        if !self.bandwidth_grid.iter().all(|&s| positive(s)) || self.bandwidth_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("bandwidth grid must be positive and strictly ascending".into()));
        }
        if !(self.regularizer_eps >= S::zero() && self.regularizer_eps < S::one()) {
            return Err(Error::InvalidConfig(format!("eps must lie in [0, 1), got {}", self.regularizer_eps)));
        }
        Ok(())
    }

    /// Single fixed bandwidth, no selection.
    pub fn fixed(bandwidth: S, regularizer_eps: S) -> Result<Self> {
        Self::new(bandwidth, vec![bandwidth], regularizer_eps)
    }
}

impl<S: Scalar> Default for KdeSpec<S> {
    /// σ ∈ {1, 2, 4, 8, 16, 32} px, 4 px for empirical maps, ε = 1e-4.
    fn default() -> Self {
        Self {
            bandwidth: S::lit(4.0),
            bandwidth_grid: [1.0, 2.0, 4.0, 8.0, 16.0, 32.0].iter().map(|&s| S::lit(s)).collect(),
            regularizer_eps: S::lit(1e-4),
        }
    }
}

/// Separable Gaussian bumps of a set of points on one grid.
struct Kernels<S> {
    shape: (usize, usize),
    rows: Vec<Vec<S>>,
    cols: Vec<Vec<S>>,
    totals: Vec<S>,
}

fn axis_kernel<S: Scalar>(center: f64, n: usize, sigma: S) -> Vec<S> {
    let two_var = S::lit(2.0) * sigma * sigma;
    (0..n)
        .map(|i| {
            let d = S::lit(i as f64 + 0.5 - center);
            (-(d * d) / two_var).exp()
        })
        .collect()
}

impl<S: Scalar> Kernels<S> {
    /// `points` are `(x, y)` in the grid's continuous coordinates.
    fn new(points: &[(f64, f64)], shape: (usize, usize), sigma: S) -> Self {
        let rows: Vec<Vec<S>> = points.iter().map(|&(_, y)| axis_kernel(y, shape.0, sigma)).collect();
        let cols: Vec<Vec<S>> = points.iter().map(|&(x, _)| axis_kernel(x, shape.1, sigma)).collect();
        let totals = rows
            .iter()
            .zip(&cols)
            .map(|(r, c)| r.iter().copied().sum::<S>() * c.iter().copied().sum::<S>())
            .collect();
        Self { shape, rows, cols, totals }
    }

    #[inline]
    fn value(&self, k: usize, (row, col): (usize, usize)) -> S {
        self.rows[k][row] * self.cols[k][col]
    }

    /// Sum of the selected kernels over the grid.
    fn grid(&self, members: impl Iterator<Item = usize>) -> Vec<S> {
        let (h, w) = self.shape;
        let mut out = vec![S::zero(); h * w];
        for k in members {
            for (r, &gy) in self.rows[k].iter().enumerate() {
                if gy == S::zero() {
                    continue;
                }
                for (o, &gx) in out[r * w..(r + 1) * w].iter_mut().zip(&self.cols[k]) {
                    *o += gy * gx;
                }
            }
        }
        out
    }
}

/// `(1 − ε) · mass / total + ε / n` as a natural log.
fn regularized_log<S: Scalar>(mass: S, total: S, eps: S, n_pixels: usize) -> S {
    let kde = if total > S::zero() { (mass / total).max(S::zero()) } else { S::zero() };
    ((S::one() - eps) * kde + eps / S::from_usize_lossy(n_pixels)).ln()
}

fn density_from_grid<S: Scalar>(grid: &[S], shape: (usize, usize), eps: S) -> Result<DensityGrid<S>> {
    let total: S = grid.iter().copied().sum();
    if !(total > S::zero()) {
        return DensityGrid::uniform(shape.0, shape.1);
    }
    let uniform = eps / S::from_usize_lossy(grid.len());
    let values: Vec<S> = grid.iter().map(|&g| (S::one() - eps) * g / total + uniform).collect();
    DensityGrid::normalize(shape.0, shape.1, &values)
}

fn pixel_of((x, y): (f64, f64), (h, w): (usize, usize)) -> (usize, usize) {
    ((y.floor().max(0.0) as usize).min(h - 1), (x.floor().max(0.0) as usize).min(w - 1))
}

/// Picks the candidate with the highest score; ties keep the earlier (smaller) one.
fn select<S: Scalar>(candidates: &[S], scores: &[S]) -> usize {
    let mut best = 0;
    for i in 1..candidates.len() {
        if scores[i] > scores[best] || (scores[best].is_nan() && !scores[i].is_nan()) {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct CenterBias<S> {
    pub density: DensityGrid<S>,
    pub bandwidth: S,
    /// `(σ, mean held-out log2-likelihood)` for every candidate.
    pub scores: Vec<(S, S)>,
}

/// Image-invariant center bias on a `target` grid.
///
/// Training fixations are mapped onto the target shape by relative position.
/// The bandwidth maximizes leave-one-image-out log-likelihood of the training
/// fixations; with a single training image, leave-one-fixation-out is used.
pub fn centerbias<S: Scalar>(
    train: &FixationSet,
    dims: &BTreeMap<String, (usize, usize)>,
    target: (usize, usize),
    spec: &KdeSpec<S>,
) -> Result<CenterBias<S>> {
    spec.validate()?;
    if train.is_empty() {
        return Err(Error::NoFixations);
    }
    if target.0 == 0 || target.1 == 0 {
        return Err(Error::BadDimensions(format!("{}x{}", target.0, target.1)));
    }
    let mut points = Vec::with_capacity(train.len());
    let mut image_of = Vec::with_capacity(train.len());
    let mut image_index: BTreeMap<&str, usize> = BTreeMap::new();
    for f in train.records() {
        let src = *dims.get(&f.image_id).ok_or_else(|| Error::UnknownImage(f.image_id.clone()))?;
        points.push(map_point(f.x, f.y, src, target));
        let next = image_index.len();
        image_of.push(*image_index.entry(f.image_id.as_str()).or_insert(next));
    }
    let n_images = image_index.len();
    let n_pixels = target.0 * target.1;
    let eps = spec.regularizer_eps;

    let scores: Vec<S> = spec
        .bandwidth_grid
        .par_iter()
        .map(|&sigma| {
            let kernels = Kernels::new(&points, target, sigma);
            let mut total = S::zero();
            if n_images < 2 {
                let all = kernels.grid(0..points.len());
                let z: S = kernels.totals.iter().copied().sum();
                for (k, &p) in points.iter().enumerate() {
                    let px = pixel_of(p, target);
                    let mass = all[px.0 * target.1 + px.1] - kernels.value(k, px);
                    total += regularized_log(mass, z - kernels.totals[k], eps, n_pixels);
                }
            } else {
                let all = kernels.grid(0..points.len());
                let z_all: S = kernels.totals.iter().copied().sum();
                for img in 0..n_images {
                    let members: Vec<usize> = (0..points.len()).filter(|&k| image_of[k] == img).collect();
                    let own = kernels.grid(members.iter().copied());
                    let z_own: S = members.iter().map(|&k| kernels.totals[k]).sum();
                    for &k in &members {
                        let px = pixel_of(points[k], target);
                        let i = px.0 * target.1 + px.1;
                        total += regularized_log(all[i] - own[i], z_all - z_own, eps, n_pixels);
                    }
                }
            }
            (total / S::from_usize_lossy(points.len())).to_bits_from_nats()
        })
        .collect();
    let best = select(&spec.bandwidth_grid, &scores);
    let bandwidth = spec.bandwidth_grid[best];
    let kernels = Kernels::new(&points, target, bandwidth);
    let density = density_from_grid(&kernels.grid(0..points.len()), target, eps)?;
    Ok(CenterBias { density, bandwidth, scores: spec.bandwidth_grid.iter().copied().zip(scores).collect() })
}

/// Per-image KDE of the observed fixations.
#[derive(Debug, Clone)]
pub struct GoldStandard<S> {
    /// Pooled estimate from all of the image's fixations.
    pub density: DensityGrid<S>,
    pub bandwidth: S,
    pub scores: Vec<(S, S)>,
    pixels: Vec<(usize, usize)>,
    loo_log_p: Vec<S>,
}

impl<S: Scalar> GoldStandard<S> {
    /// Natural-log leave-one-out probability of each fixation's pixel, with
    /// the fixation's own kernel removed.
    pub fn loo_log_p(&self) -> &[S] {
        &self.loo_log_p
    }

    /// Mean leave-one-out log2-likelihood per fixation.
    pub fn loo_log_likelihood(&self) -> S {
        self.loo_log2_sum() / S::from_usize_lossy(self.loo_log_p.len())
    }

    pub fn loo_log2_sum(&self) -> S {
        self.loo_log_p.iter().copied().sum::<S>().to_bits_from_nats()
    }

    /// Mean log2-likelihood of the pooled density at the same fixations.
    pub fn pooled_log_likelihood(&self) -> S {
        let sum: S = self.pixels.iter().map(|&(r, c)| self.density.log_at(r, c)).sum();
        (sum / S::from_usize_lossy(self.pixels.len())).to_bits_from_nats()
    }
}

fn loo_logs<S: Scalar>(kernels: &Kernels<S>, pixels: &[(usize, usize)], eps: S) -> Vec<S> {
    let n_pixels = kernels.shape.0 * kernels.shape.1;
    let z: S = kernels.totals.iter().copied().sum();
    (0..pixels.len())
        .map(|j| {
            let mass: S = (0..pixels.len()).filter(|&k| k != j).map(|k| kernels.value(k, pixels[j])).sum();
            regularized_log(mass, z - kernels.totals[j], eps, n_pixels)
        })
        .collect()
}

/// Gold standard for one image. The bandwidth maximizes
/// leave-one-fixation-out log-likelihood.
pub fn gold_standard<S: Scalar>(
    fixations: &[Fixation],
    shape: (usize, usize),
    spec: &KdeSpec<S>,
) -> Result<GoldStandard<S>> {
    spec.validate()?;
    if fixations.len() < 2 {
        return Err(Error::TooFewFixations { needed: 2, got: fixations.len() });
    }
    let points: Vec<(f64, f64)> = fixations.iter().map(|f| (f.x, f.y)).collect();
    let pixels: Vec<(usize, usize)> = points.iter().map(|&p| pixel_of(p, shape)).collect();
    let eps = spec.regularizer_eps;
    let candidates: Vec<(S, Vec<S>)> = spec
        .bandwidth_grid
        .par_iter()
        .map(|&sigma| {
            let logs = loo_logs(&Kernels::new(&points, shape, sigma), &pixels, eps);
            let mean = logs.iter().copied().sum::<S>() / S::from_usize_lossy(logs.len());
            (mean.to_bits_from_nats(), logs)
        })
        .collect();
    let scores: Vec<S> = candidates.iter().map(|(s, _)| *s).collect();
    let best = select(&spec.bandwidth_grid, &scores);
    let bandwidth = spec.bandwidth_grid[best];
    let kernels = Kernels::new(&points, shape, bandwidth);
    let density = density_from_grid(&kernels.grid(0..points.len()), shape, eps)?;
    let loo_log_p = candidates.into_iter().nth(best).map(|(_, l)| l).unwrap_or_default();
    Ok(GoldStandard {
        density,
        bandwidth,
        scores: spec.bandwidth_grid.iter().copied().zip(scores).collect(),
        pixels,
        loo_log_p,
    })
}

/// Fixation histogram blurred with a fixed Gaussian and renormalized.
pub fn empirical_map<S: Scalar>(fixated: &[(usize, usize)], shape: (usize, usize), sigma: S) -> Result<DensityGrid<S>> {
    if fixated.is_empty() {
        return Err(Error::NoFixations);
    }
    let (h, w) = shape;
    let mut hist = vec![S::zero(); h * w];
    for &(r, c) in fixated {
        if r >= h || c >= w {
            return Err(Error::OutOfBounds { record: 0, image_id: String::new(), x: c as f64, y: r as f64, height: h, width: w });
        }
        hist[r * w + c] += S::one();
    }
    let blurred = BlurOperator::new(sigma, h, w)?.apply(&hist);
    DensityGrid::normalize(h, w, &blurred.iter().map(|&v| v.max(S::zero())).collect::<Vec<_>>())
}

/// Performance relative to the gold standard, in percent.
pub fn relative_score<S: Scalar>(ig_model: S, ig_gold: S) -> Result<S> {
    if !(ig_gold > S::zero()) || !ig_gold.is_finite() {
        return Err(Error::NonpositiveGold(ig_gold.as_f64()));
    }
    Ok(S::lit(100.0) * (ig_model / ig_gold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{sample_fixations, seeded_rng};

    fn dims(items: &[(&str, (usize, usize))]) -> BTreeMap<String, (usize, usize)> {
        items.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn spec_validation() {
        assert!(KdeSpec::new(1.0f64, vec![], 0.0).is_err());
        assert!(KdeSpec::new(1.0f64, vec![2.0, 1.0], 0.0).is_err());
        assert!(KdeSpec::new(1.0f64, vec![1.0], 1.0).is_err());
        assert!(KdeSpec::new(0.0f64, vec![1.0], 0.0).is_err());
        KdeSpec::<f64>::default().validate().unwrap();
    }

    #[test]
    fn wide_kernel_is_nearly_flat() {
        let fix = FixationSet::new(vec![Fixation::new("a", "s", 2.5, 2.5)]);
        let spec = KdeSpec::fixed(50.0, 0.0).unwrap();
        let cb = centerbias(&fix, &dims(&[("a", (5, 5))]), (5, 5), &spec).unwrap();
        let p = cb.density.probs();
        let (lo, hi) = p.iter().fold((f64::MAX, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        assert!(hi / lo < 1.1);
    }

    #[test]
    fn narrow_kernel_peaks_at_fixation() {
        let fix = FixationSet::new(vec![Fixation::new("a", "s", 1.5, 1.5)]);
        let spec = KdeSpec::fixed(0.5, 0.0).unwrap();
        let cb = centerbias(&fix, &dims(&[("a", (3, 3))]), (3, 3), &spec).unwrap();
        assert_eq!(cb.density.argmax(), 4);
    }

    #[test]
    fn symmetric_fixations_give_symmetric_density() {
        let fix = FixationSet::new(vec![Fixation::new("a", "s", 0.5, 0.5), Fixation::new("b", "s", 2.5, 2.5)]);
        let spec = KdeSpec::<f64>::default();
        let cb = centerbias(&fix, &dims(&[("a", (3, 3)), ("b", (3, 3))]), (3, 3), &spec).unwrap();
        let p = cb.density.probs();
        for i in 0..9 {
            assert!((p[i] - p[8 - i]).abs() < 1e-12);
        }
    }

    #[test]
    fn centerbias_maps_across_shapes() {
        let fix = FixationSet::new(vec![
            Fixation::new("big", "s", 19.0, 9.0),
            Fixation::new("small", "s", 1.8, 1.9),
        ]);
        let cb = centerbias(&fix, &dims(&[("big", (10, 20)), ("small", (2, 2))]), (4, 4), &KdeSpec::fixed(0.3, 0.0).unwrap()).unwrap();
        assert_eq!(cb.density.argmax(), 15);
        assert!(matches!(
            centerbias(&FixationSet::default(), &dims(&[]), (4, 4), &KdeSpec::<f64>::default()),
            Err(Error::NoFixations)
        ));
    }

    #[test]
    fn bandwidth_selection_is_deterministic() {
        let d = DensityGrid::normalize(8, 8, &(0..64).map(|i| 1.0 + (i % 8) as f64).collect::<Vec<_>>()).unwrap();
        let mut rng = seeded_rng(5);
        let mut records = Vec::new();
        for img in ["a", "b", "c"] {
            records.extend(sample_fixations(img, "s", &d, 30, &mut rng));
        }
        let fix = FixationSet::new(records);
        let dm = dims(&[("a", (8, 8)), ("b", (8, 8)), ("c", (8, 8))]);
        let spec = KdeSpec::<f64>::default();
        let a = centerbias(&fix, &dm, (8, 8), &spec).unwrap();
        let b = centerbias(&fix, &dm, (8, 8), &spec).unwrap();
        assert_eq!(a.bandwidth, b.bandwidth);
        assert_eq!(a.density, b.density);
        for &sigma in &spec.bandwidth_grid {
            let cb = centerbias(&fix, &dm, (8, 8), &KdeSpec::fixed(sigma, 1e-4).unwrap()).unwrap();
            assert!((cb.density.mass() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn ties_go_to_smaller_bandwidth() {
        assert_eq!(select(&[1.0, 2.0, 3.0], &[-1.0, -1.0, -2.0]), 0);
        assert_eq!(select(&[1.0, 2.0], &[f64::NEG_INFINITY, f64::NEG_INFINITY]), 0);
        assert_eq!(select(&[1.0, 2.0], &[f64::NEG_INFINITY, -3.0]), 1);
    }

    #[test]
    fn gold_standard_single_pixel() {
        let fix: Vec<Fixation> = (0..5).map(|_| Fixation::new("a", "s", 2.5, 1.5)).collect();
        let gold = gold_standard(&fix, (4, 4), &KdeSpec::<f64>::default()).unwrap();
        assert_eq!(gold.density.argmax(), 6);
        assert!(matches!(gold_standard(&fix[..1], (4, 4), &KdeSpec::<f64>::default()), Err(Error::TooFewFixations { .. })));
    }

    #[test]
    fn loo_of_duplicate_equals_remaining_copies() {
        let fix = vec![
            Fixation::new("a", "s", 1.2, 2.3),
            Fixation::new("a", "s", 1.2, 2.3),
            Fixation::new("a", "s", 3.7, 0.4),
        ];
        let spec = KdeSpec::<f64>::fixed(1.0, 1e-4).unwrap();
        let gold = gold_standard(&fix, (4, 5), &spec).unwrap();
        // Remaining copies for fixation 0: fixation 1 and fixation 2.
        let kernels = Kernels::new(&[(1.2, 2.3), (3.7, 0.4)], (4, 5), 1.0);
        let remaining = density_from_grid(&kernels.grid(0..2), (4, 5), 1e-4).unwrap();
        assert!((gold.loo_log_p()[0] - remaining.log_at(2, 1)).abs() < 1e-12);
        assert!((gold.loo_log_p()[1] - remaining.log_at(2, 1)).abs() < 1e-12);
    }

    #[test]
    fn empirical_map_shapes() {
        assert!(matches!(empirical_map::<f64>(&[], (3, 3), 1.0), Err(Error::NoFixations)));
        let single = empirical_map(&[(2, 2)], (5, 5), 1.0f64).unwrap();
        assert_eq!(single.argmax(), 12);
        let two = empirical_map(&[(1, 1), (1, 5)], (3, 7), 0.8f64).unwrap();
        let p = two.probs();
        for r in 0..3 {
            for c in 0..7 {
                assert!((p[r * 7 + c] - p[r * 7 + (6 - c)]).abs() < 1e-12);
            }
        }
        assert!(p[8] > p[10] && p[12] > p[10]);
    }

    #[test]
    fn relative_scores() {
        assert_eq!(relative_score(0.5f64, 0.5).unwrap(), 100.0);
        assert_eq!(relative_score(0.0f64, 0.5).unwrap(), 0.0);
        assert!((relative_score(0.78f64 * 1.3, 1.3).unwrap() - 78.0).abs() < 1e-12);
        assert!(matches!(relative_score(0.1f64, 0.0), Err(Error::NonpositiveGold(_))));
    }
}
