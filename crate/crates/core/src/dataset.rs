use std::collections::BTreeMap;

use crate::fixations::FixationSet;
use crate::grid::DensityGrid;
use crate::{Error, Result, Scalar};

/// Per-image densities of one model, keyed by image id.
pub type DensityMap<S> = BTreeMap<String, DensityGrid<S>>;

/// Image registry plus fixations and per-model densities, all validated
/// against the registered image dimensions.
#[derive(Debug, Clone, Default)]
pub struct Dataset<S> {
    images: BTreeMap<String, (usize, usize)>,
    fixations: FixationSet,
    densities: BTreeMap<String, DensityMap<S>>,
}

impl<S: Scalar> Dataset<S> {
    pub fn new() -> Self {
        Self { images: BTreeMap::new(), fixations: FixationSet::default(), densities: BTreeMap::new() }
    }

    pub fn register_image(&mut self, image_id: impl Into<String>, height: usize, width: usize) -> Result<()> {
        let id = image_id.into();
        if height == 0 || width == 0 {
            return Err(Error::BadDimensions(format!("image {id:?} is {height}x{width}")));
        }
        match self.images.get(&id) {
            Some(&dims) if dims != (height, width) => {
                Err(Error::ShapeMismatch { expected: dims, got: (height, width) })
            }
            _ => {
                self.images.insert(id, (height, width));
                Ok(())
            }
        }
    }

    /// Validates every record against the registry, then appends them.
    pub fn attach_fixations(&mut self, set: FixationSet) -> Result<()> {
        for (record, f) in set.records().iter().enumerate() {
            let &(height, width) =
                self.images.get(&f.image_id).ok_or_else(|| Error::UnknownImage(f.image_id.clone()))?;
            let inside = f.x >= 0.0 && f.y >= 0.0 && f.x < width as f64 && f.y < height as f64;
            if !inside {
                return Err(Error::OutOfBounds {
                    record: record + 1,
                    image_id: f.image_id.clone(),
                    x: f.x,
                    y: f.y,
                    height,
                    width,
                });
            }
        }
        for f in set.records() {
            self.fixations.push(f.clone());
        }
        Ok(())
    }

    pub fn insert_density(&mut self, model: impl Into<String>, image_id: &str, density: DensityGrid<S>) -> Result<()> {
        let &dims = self.images.get(image_id).ok_or_else(|| Error::UnknownImage(image_id.to_string()))?;
        if density.shape() != dims {
            return Err(Error::ShapeMismatch { expected: dims, got: density.shape() });
        }
        self.densities.entry(model.into()).or_default().insert(image_id.to_string(), density);
        Ok(())
    }

    pub fn images(&self) -> &BTreeMap<String, (usize, usize)> {
        &self.images
    }

    pub fn dims(&self, image_id: &str) -> Option<(usize, usize)> {
        self.images.get(image_id).copied()
    }

    pub fn fixations(&self) -> &FixationSet {
        &self.fixations
    }

    pub fn model(&self, name: &str) -> Option<&DensityMap<S>> {
        self.densities.get(name)
    }

    pub fn model_names(&self) -> impl Iterator<Item = &str> {
        self.densities.keys().map(String::as_str)
    }
}

/// Parses an image table with header `image_id,height,width`.
pub fn read_image_table(text: &str) -> Result<BTreeMap<String, (usize, usize)>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?;
    if header.iter().ne(["image_id", "height", "width"]) {
        return Err(Error::Parse { line: 1, message: format!("expected header image_id,height,width, got {header:?}") });
    }
    let mut images = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Parse { line: e.position().map_or(0, |p| p.line() as usize), message: e.to_string() })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() != 3 || row[0].is_empty() {
            return Err(Error::Parse { line, message: "expected image_id,height,width".into() });
        }
        let dim = |i: usize| -> Result<usize> {
            row[i].parse().map_err(|_| Error::Parse { line, message: format!("bad dimension {:?}", &row[i]) })
        };
        if images.insert(row[0].to_string(), (dim(1)?, dim(2)?)).is_some() {
            return Err(Error::Parse { line, message: format!("duplicate image {:?}", &row[0]) });
        }
    }
    Ok(images)
}

pub fn write_image_table(images: &BTreeMap<String, (usize, usize)>) -> String {
    let mut out = String::from("image_id,height,width\n");
    for (id, (h, w)) in images {
        out.push_str(&format!("{id},{h},{w}\n"));
    }
    out
}
