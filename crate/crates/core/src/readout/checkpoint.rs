//! Checkpoint layout: `GZKR`, u32 LE header length, JSON header, the
//! parameters as f64 LE in [`ReadoutModel::params`] order, then the center
//! bias as an FDF1 blob.

use serde::{Deserialize, Serialize};

use super::model::ReadoutModel;
use super::train::TrainConfig;
use crate::io::{read_density, write_density};
use crate::{Error, Result, Scalar};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GZKR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub widths: Vec<usize>,
    pub alpha: f64,
    pub rho: f64,
    pub sigma_blur: f64,
    pub seed: u64,
    pub schedule: TrainConfig,
    pub n_params: usize,
    pub centerbias_shape: (usize, usize),
}

pub fn write_checkpoint<S: Scalar>(model: &ReadoutModel<S>, seed: u64, schedule: &TrainConfig) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        widths: model.widths().to_vec(),
        alpha: model.alpha.as_f64(),
        rho: model.rho.as_f64(),
        sigma_blur: model.sigma_blur().as_f64(),
        seed,
        schedule: schedule.clone(),
        n_params: model.n_params(),
        centerbias_shape: model.centerbias().shape(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut out = Vec::with_capacity(8 + json.len() + 8 * header.n_params);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in model.params() {
        out.extend_from_slice(&p.as_f64().to_le_bytes());
    }
    out.extend_from_slice(&write_density(model.centerbias()));
    Ok(out)
}

pub fn read_checkpoint<S: Scalar>(bytes: &[u8]) -> Result<(ReadoutModel<S>, CheckpointHeader)> {
    if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic { expected: "GZKR" });
    }
    let len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let json = bytes.get(8..8 + len).ok_or_else(|| Error::Truncated("checkpoint header".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(json).map_err(|e| Error::Parse { line: 0, message: e.to_string() })?;
    let start = 8 + len;
    let end = header
        .n_params
        .checked_mul(8)
        .and_then(|n| n.checked_add(start))
        .ok_or_else(|| Error::BadDimensions("parameter count overflows".into()))?;
    let blob = bytes.get(start..end).ok_or_else(|| Error::Truncated("checkpoint parameters".into()))?;
    let params: Vec<S> = blob.chunks_exact(8).map(|c| S::lit(f64::from_le_bytes(c.try_into().unwrap()))).collect();
    let centerbias = read_density::<S>(&bytes[end..])?;
    if centerbias.shape() != header.centerbias_shape {
        return Err(Error::ShapeMismatch { expected: header.centerbias_shape, got: centerbias.shape() });
    }
    let mut model = ReadoutModel::new(header.widths.clone(), centerbias, 0)?;
    model.set_params(&params)?;
    Ok((model, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DensityGrid;

    #[test]
    fn round_trip() {
        let cb = DensityGrid::normalize(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut m = ReadoutModel::<f64>::new(vec![3, 4, 2, 1], cb, 11).unwrap();
        m.alpha = 0.7;
        let cfg = TrainConfig { epochs: 5, milestones: vec![2, 4], ..Default::default() };
        let bytes = write_checkpoint(&m, 11, &cfg).unwrap();
        let (back, header) = read_checkpoint::<f64>(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(header.schedule, cfg);
        assert_eq!(header.seed, 11);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(read_checkpoint::<f64>(b"nope1234"), Err(Error::BadMagic { .. })));
        let m = ReadoutModel::<f64>::new(vec![1, 1], DensityGrid::uniform(1, 2).unwrap(), 0).unwrap();
        let bytes = write_checkpoint(&m, 0, &TrainConfig::default()).unwrap();
        assert!(read_checkpoint::<f64>(&bytes[..bytes.len() - 30]).is_err());
    }
}
