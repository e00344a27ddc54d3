use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::blur::gaussian_blur;
use crate::grid::DensityGrid;
use crate::sampling::seeded_rng;
use crate::{Error, Result, Scalar};

/// `C × H × W` feature stack in `(c, h, w)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVolume<S> {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<S>,
}

impl<S: Scalar> FeatureVolume<S> {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<S>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::BadDimensions(format!("{channels}x{height}x{width}")));
        }
        let n = channels
            .checked_mul(height)
            .and_then(|n| n.checked_mul(width))
            .ok_or_else(|| Error::BadDimensions("feature volume overflows".into()))?;
        if values.len() != n {
            return Err(Error::BadDimensions(format!("{channels}x{height}x{width} needs {n} values, got {}", values.len())));
        }
        if let Some((index, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::BadValue { index, value: v.as_f64() });
        }
        Ok(Self { channels, height, width, values })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    #[inline]
    pub fn at(&self, c: usize, h: usize, w: usize) -> S {
        self.values[(c * self.height + h) * self.width + w]
    }

    /// Channel vector at one pixel (row-major pixel index).
    pub fn pixel_into(&self, pixel: usize, out: &mut [S]) {
        let plane = self.height * self.width;
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.values[c * plane + pixel];
        }
    }

    /// Applies a permutation of pixel positions: output pixel `i` takes input pixel `perm[i]`.
    pub fn permute_pixels(&self, perm: &[usize]) -> Self {
        let plane = self.height * self.width;
        let mut values = Vec::with_capacity(self.values.len());
        for c in 0..self.channels {
            values.extend(perm.iter().map(|&p| self.values[c * plane + p]));
        }
        Self { values, ..*self }
    }
}

/// Generator of synthetic feature volumes with a known fixation density.
///
/// Each channel is a standardized mix of Gaussian blobs and one soft edge.
/// The hidden density is
/// `softmax(blur(Σ_c β_c f_c, blur_sigma) + alpha · ln centerbias)`, with the
/// readout direction `β` fixed by `weight_seed` so all images of a dataset
/// share it.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub blobs_per_channel: usize,
    /// Blob width in pixels.
    pub blob_sigma: f64,
    /// Euclidean norm of `β`.
    pub signal: f64,
    pub alpha: f64,
    pub blur_sigma: f64,
    /// Center-bias σ as a fraction of the shorter image side.
    pub centerbias_width: f64,
    pub weight_seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            channels: 8,
            height: 32,
            width: 32,
            blobs_per_channel: 3,
            blob_sigma: 3.0,
            signal: 2.0,
            alpha: 1.0,
            blur_sigma: 2.0,
            centerbias_width: 0.3,
            weight_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthSample<S> {
    pub features: FeatureVolume<S>,
    pub density: DensityGrid<S>,
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::InvalidConfig("synthetic volume needs nonzero dimensions".into()));
        }
        for (name, v) in [("blob_sigma", self.blob_sigma), ("blur_sigma", self.blur_sigma), ("centerbias_width", self.centerbias_width)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Readout direction `β`, shared across images.
    pub fn readout_weights<S: Scalar>(&self) -> Vec<S> {
        let mut rng = seeded_rng(self.weight_seed ^ 0x5e_ed0f_be7a);
        let raw: Vec<f64> = (0..self.channels).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        raw.iter().map(|v| S::lit(self.signal * v / norm)).collect()
    }

    /// Isotropic Gaussian centered on the image.
    pub fn centerbias<S: Scalar>(&self) -> Result<DensityGrid<S>> {
        self.validate()?;
        let sigma = self.centerbias_width * self.height.min(self.width) as f64;
        let (cy, cx) = (self.height as f64 / 2.0, self.width as f64 / 2.0);
        let values: Vec<S> = (0..self.height * self.width)
            .map(|i| {
                let dy = (i / self.width) as f64 + 0.5 - cy;
                let dx = (i % self.width) as f64 + 0.5 - cx;
                S::lit((-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp())
            })
            .collect();
        DensityGrid::normalize(self.height, self.width, &values)
    }
}

/// Deterministic synthetic volume and its generating density.
pub fn synth_features<S: Scalar>(spec: &SynthSpec, seed: u64) -> Result<SynthSample<S>> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let plane = h * w;
    let mut rng = seeded_rng(seed);
    let mut values = Vec::with_capacity(spec.channels * plane);
    for _ in 0..spec.channels {
        let mut channel = vec![0.0f64; plane];
        for _ in 0..spec.blobs_per_channel {
            let cy = rng.random_range(0.0..h as f64);
            let cx = rng.random_range(0.0..w as f64);
            let s = spec.blob_sigma * rng.random_range(0.5..1.5);
            let amp = rng.random_range(-1.0..1.0);
            for (i, v) in channel.iter_mut().enumerate() {
                let dy = (i / w) as f64 + 0.5 - cy;
                let dx = (i % w) as f64 + 0.5 - cx;
                *v += amp * (-(dx * dx + dy * dy) / (2.0 * s * s)).exp();
            }
        }
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let offset = rng.random_range(-0.3..0.3) * h.min(w) as f64;
        let amp = rng.random_range(-0.5..0.5);
        for (i, v) in channel.iter_mut().enumerate() {
            let dy = (i / w) as f64 + 0.5 - h as f64 / 2.0;
            let dx = (i % w) as f64 + 0.5 - w as f64 / 2.0;
            *v += amp * ((dx * theta.cos() + dy * theta.sin() - offset) / spec.blob_sigma).tanh();
        }
        for v in channel.iter_mut() {
            *v += 0.05 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
        }
        let mean = channel.iter().sum::<f64>() / plane as f64;
        let std = (channel.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / plane as f64).sqrt().max(1e-12);
        values.extend(channel.iter().map(|v| S::lit((v - mean) / std)));
    }
    let features = FeatureVolume::new(spec.channels, h, w, values)?;
    let beta: Vec<S> = spec.readout_weights();
    let mut linear = vec![S::zero(); plane];
    for (c, &b) in beta.iter().enumerate() {
        for (l, &f) in linear.iter_mut().zip(&features.values()[c * plane..(c + 1) * plane]) {
            *l += b * f;
        }
    }
    let blurred = gaussian_blur(&linear, h, w, S::lit(spec.blur_sigma))?;
    let cb: DensityGrid<S> = spec.centerbias()?;
    let alpha = S::lit(spec.alpha);
    let logits = blurred.iter().zip(cb.log_p()).map(|(&b, &l)| b + alpha * l).collect();
    let density = DensityGrid::from_logits(h, w, logits)?;
    Ok(SynthSample { features, density })
}
