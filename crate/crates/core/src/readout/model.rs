use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;

use super::FeatureVolume;
use crate::blur::BlurOperator;
use crate::fixations::FixationSet;
use crate::grid::DensityGrid;
use crate::logspace::logsumexp;
use crate::sampling::seeded_rng;
use crate::scalar::{sigmoid, softplus, softplus_inv};
use crate::{Error, Result, Scalar};

/// Variance floor of the per-position channel normalization.
pub const NORM_EPS: f64 = 1e-5;
/// Hidden widths used when none are configured.
pub const DEFAULT_HIDDEN: [usize; 3] = [16, 32, 2];
/// Blur width of a freshly initialized model, in pixels.
pub const INITIAL_BLUR_SIGMA: f64 = 2.0;

/// One 1×1 convolution block. Hidden blocks normalize across channels at
/// each position, apply a per-channel scale and shift, then softplus. The
/// final block is a plain affine map to one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<S> {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs × inputs`, row-major.
    pub weight: Vec<S>,
    pub bias: Vec<S>,
    /// Empty on the final block.
    pub scale: Vec<S>,
    pub shift: Vec<S>,
}

impl<S: Scalar> Layer<S> {
    fn is_final(&self) -> bool {
        self.scale.is_empty()
    }

    fn n_params(&self) -> usize {
        self.weight.len() + self.bias.len() + self.scale.len() + self.shift.len()
    }
}

/// Readout head: pointwise network, Gaussian blur of width
/// `softplus(rho)`, log center bias weighted by `alpha`, spatial softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutModel<S> {
    widths: Vec<usize>,
    layers: Vec<Layer<S>>,
    pub rho: S,
    pub alpha: S,
    centerbias: DensityGrid<S>,
}

/// Fixated pixels of one image together with its features.
#[derive(Debug, Clone)]
pub struct ImageSample<S> {
    pub image_id: String,
    pub features: FeatureVolume<S>,
    pub fixations: Vec<(usize, usize)>,
}

impl<S: Scalar> ImageSample<S> {
    pub fn new(image_id: impl Into<String>, features: FeatureVolume<S>, fixations: Vec<(usize, usize)>) -> Result<Self> {
        let image_id = image_id.into();
        let (h, w) = features.shape();
        if let Some(&(r, c)) = fixations.iter().find(|&&(r, c)| r >= h || c >= w) {
            return Err(Error::OutOfBounds { record: 0, image_id, x: c as f64, y: r as f64, height: h, width: w });
        }
        Ok(Self { image_id, features, fixations })
    }
}

/// Pairs feature volumes with the fixations on each image.
pub fn image_samples<S: Scalar>(
    features: &BTreeMap<String, FeatureVolume<S>>,
    fixations: &FixationSet,
) -> Result<Vec<ImageSample<S>>> {
    let groups = fixations.by_image();
    if let Some(id) = groups.keys().find(|id| !features.contains_key(**id)) {
        return Err(Error::UnknownImage(id.to_string()));
    }
    features
        .iter()
        .map(|(id, fv)| {
            let pixels = groups.get(id.as_str()).map(|fs| fs.iter().map(|f| f.pixel()).collect()).unwrap_or_default();
            ImageSample::new(id.clone(), fv.clone(), pixels)
        })
        .collect()
}

/// Per-pixel activations kept for backpropagation.
struct Trace<S> {
    /// `z[0]` is the input; `z[l + 1]` the output of block `l`.
    z: Vec<Vec<S>>,
    a: Vec<Vec<S>>,
    ahat: Vec<Vec<S>>,
    y: Vec<Vec<S>>,
    inv_std: Vec<S>,
    grad_z: Vec<Vec<S>>,
}

impl<S: Scalar> Trace<S> {
    fn new(widths: &[usize]) -> Self {
        let per_layer = |f: fn(usize) -> usize| widths[1..].iter().map(|&w| vec![S::zero(); f(w)]).collect::<Vec<_>>();
        Self {
            z: widths.iter().map(|&w| vec![S::zero(); w]).collect(),
            a: per_layer(|w| w),
            ahat: per_layer(|w| w),
            y: per_layer(|w| w),
            inv_std: vec![S::zero(); widths.len() - 1],
            grad_z: widths.iter().map(|&w| vec![S::zero(); w]).collect(),
        }
    }
}

impl<S: Scalar> ReadoutModel<S> {
    /// `[channels, 16, 32, 2, 1]`.
    pub fn default_widths(channels: usize) -> Vec<usize> {
        let mut w = vec![channels];
        w.extend_from_slice(&DEFAULT_HIDDEN);
        w.push(1);
        w
    }

    /// Fresh model. Weights and biases are drawn from
    /// `U(−1/√fan_in, 1/√fan_in)`; normalization scale 1, shift 0,
    /// `alpha = 1`, blur σ = 2 px.
    pub fn new(widths: Vec<usize>, centerbias: DensityGrid<S>, seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) || *widths.last().unwrap() != 1 {
            return Err(Error::InvalidConfig(format!("readout widths must be nonzero and end in 1, got {widths:?}")));
        }
        Self::check_centerbias(&centerbias)?;
        let mut rng = seeded_rng(seed);
        let n_layers = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(l, io)| {
                let (inputs, outputs) = (io[0], io[1]);
                let bound = 1.0 / (inputs as f64).sqrt();
                let mut draw = |n: usize| -> Vec<S> { (0..n).map(|_| S::lit(rng.random_range(-bound..=bound))).collect() };
                let weight = draw(inputs * outputs);
                let bias = draw(outputs);
                let hidden = l + 1 < n_layers;
                Layer {
                    inputs,
                    outputs,
                    weight,
                    bias,
                    scale: if hidden { vec![S::one(); outputs] } else { Vec::new() },
                    shift: if hidden { vec![S::zero(); outputs] } else { Vec::new() },
                }
            })
            .collect();
        Ok(Self { widths, layers, rho: softplus_inv(S::lit(INITIAL_BLUR_SIGMA)), alpha: S::one(), centerbias })
    }

    fn check_centerbias(centerbias: &DensityGrid<S>) -> Result<()> {
        if let Some((index, &v)) = centerbias.log_p().iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::BadValue { index, value: v.as_f64() });
        }
        Ok(())
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn layers(&self) -> &[Layer<S>] {
        &self.layers
    }

    pub fn centerbias(&self) -> &DensityGrid<S> {
        &self.centerbias
    }

    pub fn set_centerbias(&mut self, centerbias: DensityGrid<S>) -> Result<()> {
        Self::check_centerbias(&centerbias)?;
        self.centerbias = centerbias;
        Ok(())
    }

    pub fn sigma_blur(&self) -> S {
        softplus(self.rho)
    }

    pub fn set_sigma_blur(&mut self, sigma: S) {
        self.rho = softplus_inv(sigma);
    }

    /// Sets every readout weight and bias to zero, leaving normalization
    /// parameters, blur and center-bias weight alone.
    pub fn zero_readout(&mut self) {
        for layer in &mut self.layers {
            layer.weight.iter_mut().chain(layer.bias.iter_mut()).for_each(|v| *v = S::zero());
        }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum::<usize>() + 2
    }

    /// Flat parameters: per block `weight, bias[, scale, shift]`, then `rho`,
    /// then `alpha`.
    pub fn params(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weight);
            out.extend_from_slice(&l.bias);
            out.extend_from_slice(&l.scale);
            out.extend_from_slice(&l.shift);
        }
        out.push(self.rho);
        out.push(self.alpha);
        out
    }

    pub fn set_params(&mut self, params: &[S]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::InvalidConfig(format!("expected {} parameters, got {}", self.n_params(), params.len())));
        }
        if let Some((index, v)) = params.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::BadValue { index, value: v.as_f64() });
        }
        let mut rest = params;
        let mut take = |dst: &mut Vec<S>| {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        };
        for l in &mut self.layers {
            take(&mut l.weight);
            take(&mut l.bias);
            take(&mut l.scale);
            take(&mut l.shift);
        }
        self.rho = rest[0];
        self.alpha = rest[1];
        Ok(())
    }

    fn check_features(&self, features: &FeatureVolume<S>) -> Result<()> {
        if features.channels() != self.widths[0] {
            return Err(Error::BadDimensions(format!(
                "model expects {} channels, features have {}",
                self.widths[0],
                features.channels()
            )));
        }
        if features.shape() != self.centerbias.shape() {
            return Err(Error::ShapeMismatch { expected: self.centerbias.shape(), got: features.shape() });
        }
        Ok(())
    }

    /// Runs the blocks on `trace.z[0]`, filling the trace.
    fn pixel_forward(&self, t: &mut Trace<S>) -> S {
        let eps = S::lit(NORM_EPS);
        for (l, layer) in self.layers.iter().enumerate() {
            let (lo, hi) = t.z.split_at_mut(l + 1);
            let zin = &lo[l];
            let zout = &mut hi[0];
            let a = &mut t.a[l];
            for o in 0..layer.outputs {
                let row = &layer.weight[o * layer.inputs..(o + 1) * layer.inputs];
                a[o] = layer.bias[o] + row.iter().zip(zin).map(|(&w, &z)| w * z).sum::<S>();
            }
            if layer.is_final() {
                zout.copy_from_slice(a);
                continue;
            }
            let n = S::from_usize_lossy(layer.outputs);
            let mean = a.iter().copied().sum::<S>() / n;
            let var = a.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / n;
            let inv_std = S::one() / (var + eps).sqrt();
            t.inv_std[l] = inv_std;
            for o in 0..layer.outputs {
                let ah = (a[o] - mean) * inv_std;
                let y = layer.scale[o] * ah + layer.shift[o];
                t.ahat[l][o] = ah;
                t.y[l][o] = y;
                zout[o] = softplus(y);
            }
        }
        t.z[self.layers.len()][0]
    }

    /// Backpropagates `grad_out` (derivative w.r.t. the pixel's readout value)
    /// through the trace left by [`pixel_forward`](Self::pixel_forward).
    fn pixel_backward(&self, t: &mut Trace<S>, grad_out: S, grad: &mut [S], offsets: &[usize]) {
        let last = self.layers.len();
        t.grad_z[last][0] = grad_out;
        for l in (0..last).rev() {
            let layer = &self.layers[l];
            let off = offsets[l];
            let (w_off, b_off) = (off, off + layer.weight.len());
            let s_off = b_off + layer.bias.len();
            let sh_off = s_off + layer.scale.len();
            let (lo, hi) = t.grad_z.split_at_mut(l + 1);
            let gz_in = &mut lo[l];
            let gz_out = &hi[0];
            // gradient w.r.t. the pre-normalization activation, stored in grad_a
            let mut grad_a = std::mem::take(&mut t.a[l]);
            if layer.is_final() {
                grad_a.copy_from_slice(gz_out);
            } else {
                let n = S::from_usize_lossy(layer.outputs);
                let ahat = &t.ahat[l];
                let mut m1 = S::zero();
                let mut m2 = S::zero();
                for o in 0..layer.outputs {
                    let gy = gz_out[o] * sigmoid(t.y[l][o]);
                    grad[s_off + o] += gy * ahat[o];
                    grad[sh_off + o] += gy;
                    let gh = gy * layer.scale[o];
                    grad_a[o] = gh;
                    m1 += gh;
                    m2 += gh * ahat[o];
                }
                m1 /= n;
                m2 /= n;
                let inv_std = t.inv_std[l];
                for o in 0..layer.outputs {
                    grad_a[o] = inv_std * (grad_a[o] - m1 - ahat[o] * m2);
                }
            }
            let zin = &t.z[l];
            for o in 0..layer.outputs {
                let ga = grad_a[o];
                grad[b_off + o] += ga;
                let wrow = &mut grad[w_off + o * layer.inputs..w_off + (o + 1) * layer.inputs];
                for (g, &z) in wrow.iter_mut().zip(zin) {
                    *g += ga * z;
                }
            }
            if l > 0 {
                for (i, g) in gz_in.iter_mut().enumerate() {
                    *g = (0..layer.outputs).map(|o| layer.weight[o * layer.inputs + i] * grad_a[o]).sum();
                }
            }
            t.a[l] = grad_a;
        }
    }

    fn param_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.n_params();
        }
        offsets
    }

    /// Pre-blur readout map, one value per pixel.
    pub fn readout_map(&self, features: &FeatureVolume<S>) -> Result<Vec<S>> {
        if features.channels() != self.widths[0] {
            return Err(Error::BadDimensions(format!("model expects {} channels", self.widths[0])));
        }
        let mut t = Trace::new(&self.widths);
        let n = features.height() * features.width();
        Ok((0..n)
            .map(|p| {
                features.pixel_into(p, &mut t.z[0]);
                self.pixel_forward(&mut t)
            })
            .collect())
    }

    fn logits(&self, features: &FeatureVolume<S>, blur: &BlurOperator<S>) -> Result<(Vec<S>, Vec<S>)> {
        let map = self.readout_map(features)?;
        let blurred = blur.apply(&map);
        let logits = blurred.iter().zip(self.centerbias.log_p()).map(|(&b, &c)| b + self.alpha * c).collect();
        Ok((map, logits))
    }

    /// Predicted fixation density for one feature volume.
    pub fn forward(&self, features: &FeatureVolume<S>) -> Result<DensityGrid<S>> {
        self.check_features(features)?;
        let (h, w) = features.shape();
        let blur = BlurOperator::new(self.sigma_blur(), h, w)?;
        let (_, logits) = self.logits(features, &blur)?;
        DensityGrid::from_logits(h, w, logits)
    }

    /// Log2-likelihood sum of one image and, optionally, its contribution to
    /// the gradient of the batch loss `−(1/n_total) Σ log2 p`.
    fn image_terms(&self, sample: &ImageSample<S>, n_total: S, grad: Option<&mut [S]>) -> Result<S> {
        self.check_features(&sample.features)?;
        let (h, w) = sample.features.shape();
        let blur = BlurOperator::new(self.sigma_blur(), h, w)?;
        let (map, logits) = self.logits(&sample.features, &blur)?;
        let lse = logsumexp(&logits);
        let log_p: Vec<S> = logits.iter().map(|&l| l - lse).collect();
        let loglik: S = sample.fixations.iter().map(|&(r, c)| log_p[r * w + c]).sum::<S>().to_bits_from_nats();
        let Some(grad) = grad else { return Ok(loglik) };

        // d loss / d logit = (n_img · p − count) / (N ln 2)
        let norm = S::one() / (n_total * S::LN_2());
        let n_img = S::from_usize_lossy(sample.fixations.len());
        let mut g_logits: Vec<S> = log_p.iter().map(|&l| n_img * l.exp() * norm).collect();
        for &(r, c) in &sample.fixations {
            g_logits[r * w + c] -= norm;
        }
        let n = grad.len();
        grad[n - 1] += g_logits.iter().zip(self.centerbias.log_p()).map(|(&g, &c)| g * c).sum::<S>();
        grad[n - 2] += blur.sigma_gradient(&map, &g_logits) * sigmoid(self.rho);
        let g_map = blur.apply_transpose(&g_logits);

        let offsets = self.param_offsets();
        let mut t = Trace::new(&self.widths);
        for (p, &g) in g_map.iter().enumerate() {
            if g == S::zero() {
                continue;
            }
            sample.features.pixel_into(p, &mut t.z[0]);
            self.pixel_forward(&mut t);
            self.pixel_backward(&mut t, g, grad, &offsets);
        }
        Ok(loglik)
    }

    fn total_fixations(batch: &[ImageSample<S>]) -> Result<S> {
        let n: usize = batch.iter().map(|s| s.fixations.len()).sum();
        if n == 0 {
            return Err(Error::NoFixations);
        }
        Ok(S::from_usize_lossy(n))
    }

    /// Negative log-likelihood in bits per fixation.
    pub fn nll(&self, batch: &[ImageSample<S>]) -> Result<S> {
        let n = Self::total_fixations(batch)?;
        let sums: Vec<S> = batch.par_iter().map(|s| self.image_terms(s, n, None)).collect::<Result<_>>()?;
        Ok(-sums.into_iter().sum::<S>() / n)
    }

    /// Loss and its exact gradient, laid out like [`params`](Self::params).
    pub fn gradients(&self, batch: &[ImageSample<S>]) -> Result<(S, Vec<S>)> {
        let n = Self::total_fixations(batch)?;
        let parts: Vec<(S, Vec<S>)> = batch
            .par_iter()
            .map(|s| {
                let mut g = vec![S::zero(); self.n_params()];
                let ll = self.image_terms(s, n, Some(&mut g))?;
                Ok((ll, g))
            })
            .collect::<Result<_>>()?;
        let mut grad = vec![S::zero(); self.n_params()];
        let mut ll = S::zero();
        for (l, g) in parts {
            ll += l;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        Ok((-ll / n, grad))
    }
}
