//! Binary file formats.
//!
//! FDF1 density file, little-endian throughout:
//!
//! | offset | size      | field                                      |
//! |--------|-----------|--------------------------------------------|
//! | 0      | 4         | magic `FDF1`                               |
//! | 4      | 4         | height (u32)                               |
//! | 8      | 4         | width (u32)                                |
//! | 12     | 1         | domain flag: 0 = probabilities, 1 = ln     |
//! | 13     | 8·h·w     | f64 values, row-major                      |
//!
//! FFV1 feature file: magic `FFV1`, u32 channels, u32 height, u32 width,
//! then `C·H·W` f32 values in `(c, h, w)` order.

use crate::grid::DensityGrid;
use crate::logspace::logsumexp;
use crate::readout::FeatureVolume;
use crate::{Error, Result, Scalar};

pub const DENSITY_MAGIC: &[u8; 4] = b"FDF1";
pub const FEATURE_MAGIC: &[u8; 4] = b"FFV1";

/// Mass tolerance accepted when reading density files.
pub const READ_TOLERANCE: f64 = 1e-6;

const DOMAIN_LINEAR: u8 = 0;
const DOMAIN_LOG: u8 = 1;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated(format!("{what} at byte {}", self.pos))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

fn grid_len(dims: &[u32], elem_size: usize) -> Result<usize> {
    let mut n: usize = 1;
    for &d in dims {
        if d == 0 {
            return Err(Error::BadDimensions(format!("{dims:?} has a zero axis")));
        }
        n = n
            .checked_mul(d as usize)
            .ok_or_else(|| Error::BadDimensions(format!("{dims:?} overflows")))?;
    }
    n.checked_mul(elem_size)
        .ok_or_else(|| Error::BadDimensions(format!("{dims:?} overflows")))?;
    Ok(n)
}

/// Decodes an FDF1 file. Linear-domain payloads are converted to natural
/// logs. Payloads whose mass is within [`READ_TOLERANCE`] of one are
/// accepted; they are renormalized only when off by more than the scalar's
/// grid tolerance, so files written by [`write_density`] load verbatim.
pub fn read_density<S: Scalar>(bytes: &[u8]) -> Result<DensityGrid<S>> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4, "magic")? != DENSITY_MAGIC {
        return Err(Error::BadMagic { expected: "FDF1" });
    }
    let height = cur.u32("height")?;
    let width = cur.u32("width")?;
    let n = grid_len(&[height, width], 8)?;
    let flag = cur.take(1, "domain flag")?[0];
    if flag != DOMAIN_LINEAR && flag != DOMAIN_LOG {
        return Err(Error::BadValue { index: 12, value: flag as f64 });
    }
    let payload = cur.take(n * 8, "payload")?;
    if cur.pos != bytes.len() {
        return Err(Error::BadDimensions(format!(
            "{} trailing bytes after {height}x{width} payload",
            bytes.len() - cur.pos
        )));
    }
    let raw: Vec<f64> = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let mut log_p: Vec<S> = Vec::with_capacity(n);
    if flag == DOMAIN_LINEAR {
        for (index, &v) in raw.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::BadValue { index, value: v });
            }
        }
        let mass: f64 = raw.iter().sum();
        if (mass - 1.0).abs() > READ_TOLERANCE {
            return Err(Error::NotNormalized { mass });
        }
        log_p.extend(raw.iter().map(|&v| S::lit(v.ln())));
    } else {
        for (index, &v) in raw.iter().enumerate() {
            if v.is_nan() || v == f64::INFINITY {
                return Err(Error::BadValue { index, value: v });
            }
        }
        log_p.extend(raw.iter().map(|&v| S::lit(v)));
    }
    let lse = logsumexp(&log_p).as_f64();
    if lse == f64::NEG_INFINITY {
        return Err(Error::NotNormalized { mass: 0.0 });
    }
    if lse.abs() > READ_TOLERANCE {
        return Err(Error::NotNormalized { mass: lse.exp() });
    }
    if lse.abs() > S::NORM_TOL {
        for l in &mut log_p {
            *l -= S::lit(lse);
        }
    }
    DensityGrid::from_log_with_tolerance(height as usize, width as usize, log_p, READ_TOLERANCE)
}

/// Encodes a density as an FDF1 file in the natural-log domain.
pub fn write_density<S: Scalar>(density: &DensityGrid<S>) -> Vec<u8> {
    let mut out = Vec::with_capacity(13 + 8 * density.len());
    out.extend_from_slice(DENSITY_MAGIC);
    out.extend_from_slice(&(density.height() as u32).to_le_bytes());
    out.extend_from_slice(&(density.width() as u32).to_le_bytes());
    out.push(DOMAIN_LOG);
    for &l in density.log_p() {
        out.extend_from_slice(&l.as_f64().to_le_bytes());
    }
    out
}

/// Encodes linear-domain probabilities (flag 0). Mostly useful for fixtures.
pub fn write_density_linear<S: Scalar>(density: &DensityGrid<S>) -> Vec<u8> {
    let mut out = write_density(density);
    out[12] = DOMAIN_LINEAR;
    for (chunk, &l) in out[13..].chunks_exact_mut(8).zip(density.log_p()) {
        chunk.copy_from_slice(&l.as_f64().exp().to_le_bytes());
    }
    out
}

pub fn read_features<S: Scalar>(bytes: &[u8]) -> Result<FeatureVolume<S>> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4, "magic")? != FEATURE_MAGIC {
        return Err(Error::BadMagic { expected: "FFV1" });
    }
    let c = cur.u32("channels")?;
    let h = cur.u32("height")?;
    let w = cur.u32("width")?;
    let n = grid_len(&[c, h, w], 4)?;
    let payload = cur.take(n * 4, "payload")?;
    if cur.pos != bytes.len() {
        return Err(Error::BadDimensions(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    let values = payload
        .chunks_exact(4)
        .map(|b| S::lit(f32::from_le_bytes(b.try_into().unwrap()) as f64))
        .collect();
    FeatureVolume::new(c as usize, h as usize, w as usize, values)
}

/// Encodes a feature volume as FFV1. Values are narrowed to f32.
pub fn write_features<S: Scalar>(features: &FeatureVolume<S>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * features.values().len());
    out.extend_from_slice(FEATURE_MAGIC);
    for d in [features.channels(), features.height(), features.width()] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in features.values() {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fdf(h: u32, w: u32, flag: u8, values: &[f64]) -> Vec<u8> {
        let mut b = b"FDF1".to_vec();
        b.extend_from_slice(&h.to_le_bytes());
        b.extend_from_slice(&w.to_le_bytes());
        b.push(flag);
        for v in values {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    #[test]
    fn linear_file_is_converted_to_log() {
        let d: DensityGrid<f64> = read_density(&fdf(1, 2, 0, &[0.5, 0.5])).unwrap();
        assert_eq!(d.log_p(), &[0.5f64.ln(), 0.5f64.ln()]);
    }

    #[test]
    fn unnormalized_payload_is_rejected() {
        let err = read_density::<f64>(&fdf(1, 2, 0, &[0.45, 0.45])).unwrap_err();
        assert!(matches!(err, Error::NotNormalized { mass } if (mass - 0.9).abs() < 1e-12));
        let err = read_density::<f64>(&fdf(1, 2, 1, &[0.45f64.ln(), 0.45f64.ln()])).unwrap_err();
        assert!(matches!(err, Error::NotNormalized { .. }));
    }

    #[test]
    fn header_errors() {
        assert_eq!(read_density::<f64>(b"FDF2\0\0\0\0"), Err(Error::BadMagic { expected: "FDF1" }));
        assert!(matches!(read_density::<f64>(&fdf(0, 2, 1, &[])), Err(Error::BadDimensions(_))));
        assert!(matches!(
            read_density::<f64>(&fdf(u32::MAX, u32::MAX, 1, &[])),
            Err(Error::BadDimensions(_)) | Err(Error::Truncated(_))
        ));
        assert!(matches!(read_density::<f64>(&fdf(1, 2, 1, &[0.0])), Err(Error::Truncated(_))));
        assert!(matches!(read_density::<f64>(&fdf(1, 1, 7, &[0.0])), Err(Error::BadValue { .. })));
        let mut long = fdf(1, 1, 1, &[0.0]);
        long.push(0);
        assert!(matches!(read_density::<f64>(&long), Err(Error::BadDimensions(_))));
    }

    #[test]
    fn small_mass_error_is_renormalized() {
        let d: DensityGrid<f64> = read_density(&fdf(1, 2, 0, &[0.5, 0.5000001])).unwrap();
        assert!((d.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let d = DensityGrid::<f64>::normalize(1, 4, &[0.4, 0.3, 0.2, 0.1]).unwrap();
        let bytes = write_density(&d);
        let back: DensityGrid<f64> = read_density(&bytes).unwrap();
        assert_eq!(back, d);
        assert_eq!(write_density(&back), bytes);
    }

    #[test]
    fn linear_writer_reads_back() {
        let d = DensityGrid::<f64>::normalize(2, 2, &[1.0, 0.0, 2.0, 1.0]).unwrap();
        let back: DensityGrid<f64> = read_density(&write_density_linear(&d)).unwrap();
        for (a, b) in back.log_p().iter().zip(d.log_p()) {
            assert!(a == b || (a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn features_round_trip() {
        let fv = FeatureVolume::<f64>::new(2, 1, 3, vec![0.5, -1.0, 2.0, 3.25, 0.0, -0.125]).unwrap();
        let bytes = write_features(&fv);
        assert_eq!(bytes.len(), 16 + 24);
        assert_eq!(read_features::<f64>(&bytes).unwrap(), fv);
        assert_eq!(read_features::<f64>(b"FFV2"), Err(Error::BadMagic { expected: "FFV1" }));
    }

    proptest! {
        #[test]
        fn log_files_round_trip_bitwise(h in 1usize..5, w in 1usize..5, seed in proptest::collection::vec(0.0f64..10.0, 25)) {
            let values: Vec<f64> = seed[..h * w].iter().map(|v| v + 1e-3).collect();
            let d = DensityGrid::normalize(h, w, &values).unwrap();
            let bytes = write_density(&d);
            let back: DensityGrid<f64> = read_density(&bytes).unwrap();
            prop_assert_eq!(write_density(&back), bytes);
            prop_assert_eq!(back, d);
        }
    }
}
