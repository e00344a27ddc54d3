use rand::seq::SliceRandom;
use serde::Serialize;

use crate::sampling::seeded_rng;
use crate::{Error, Result};

pub const DEFAULT_FOLDS: usize = 10;

/// Role of an image within one cross-validation rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Validation,
    Test,
}

/// Fold assignment of every image. In rotation `r` fold `r` is the test
/// set and fold `(r + 1) mod k` the validation set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Folds {
    /// `(image_id, fold)` sorted by image id.
    assignment: Vec<(String, usize)>,
    folds: usize,
}

impl Folds {
    pub fn folds(&self) -> usize {
        self.folds
    }

    pub fn assignment(&self) -> &[(String, usize)] {
        &self.assignment
    }

    pub fn fold_of(&self, image_id: &str) -> Option<usize> {
        self.assignment.binary_search_by(|(id, _)| id.as_str().cmp(image_id)).ok().map(|i| self.assignment[i].1)
    }

    pub fn role(&self, image_id: &str, rotation: usize) -> Option<Role> {
        let fold = self.fold_of(image_id)?;
        Some(if fold == rotation % self.folds {
            Role::Test
        } else if fold == (rotation + 1) % self.folds {
            Role::Validation
        } else {
            Role::Train
        })
    }

    /// Image ids with `role` in `rotation`, sorted.
    pub fn images(&self, rotation: usize, role: Role) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(id, _)| self.role(id, rotation) == Some(role))
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.folds];
        for (_, f) in &self.assignment {
            sizes[*f] += 1;
        }
        sizes
    }
}

/// Shuffles the sorted ids with `seed` and deals them round-robin into
/// `folds` folds.
pub fn make_folds<I: AsRef<str>>(image_ids: &[I], folds: usize, seed: u64) -> Result<Folds> {
    if folds < 3 {
        return Err(Error::InvalidConfig(format!("need at least 3 folds, got {folds}")));
    }
    let mut ids: Vec<String> = image_ids.iter().map(|s| s.as_ref().to_string()).collect();
    ids.sort();
    ids.dedup();
    if ids.len() < folds {
        return Err(Error::TooFewImages { needed: folds, got: ids.len() });
    }
    let mut shuffled = ids;
    shuffled.shuffle(&mut seeded_rng(seed));
    let mut assignment: Vec<(String, usize)> = shuffled.into_iter().enumerate().map(|(i, id)| (id, i % folds)).collect();
    assignment.sort();
    Ok(Folds { assignment, folds })
}
