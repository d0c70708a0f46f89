//! Mask pairs and gyro-permutations.
//!
//! Coordinate conventions used throughout the crate:
//! * `sigma_o[p]` is the original output channel placed at permuted row `p`;
//!   tile `t` covers permuted rows `t*V .. (t+1)*V`.
//! * `vector_mask` is indexed by `(tile, original column)`.
//! * `element_mask` is indexed by `(original row, original column)`, so it
//!   can be applied to the weights directly.
//! * `sigma_i[t]` lists tile `t`'s surviving original column ids in order;
//!   consecutive chunks of `M` form the N:M groups.

use serde::{Deserialize, Serialize};

use crate::config::Layout;
use crate::error::{HinmError, Result};
use crate::matrix::check_permutation;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPair {
    tiles: usize,
    rows: usize,
    cols: usize,
    vector_mask: Vec<bool>,
    element_mask: Vec<bool>,
}

impl MaskPair {
    pub fn new(
        tiles: usize,
        rows: usize,
        cols: usize,
        vector_mask: Vec<bool>,
        element_mask: Vec<bool>,
    ) -> Result<Self> {
        if vector_mask.len() != tiles * cols || element_mask.len() != rows * cols {
            return Err(HinmError::Dimension(format!(
                "mask sizes ({}, {}) do not match {tiles} tiles and a {rows}x{cols} matrix",
                vector_mask.len(),
                element_mask.len()
            )));
        }
        Ok(Self {
            tiles,
            rows,
            cols,
            vector_mask,
            element_mask,
        })
    }

    /// Masks that keep everything.
    pub fn all_true(tiles: usize, rows: usize, cols: usize) -> Self {
        Self::filled(tiles, rows, cols, true)
    }

    /// Masks that keep nothing.
    pub fn all_false(tiles: usize, rows: usize, cols: usize) -> Self {
        Self::filled(tiles, rows, cols, false)
    }

    fn filled(tiles: usize, rows: usize, cols: usize, value: bool) -> Self {
        Self {
            tiles,
            rows,
            cols,
            vector_mask: vec![value; tiles * cols],
            element_mask: vec![value; rows * cols],
        }
    }

    pub fn tiles(&self) -> usize {
        self.tiles
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn vector_mask(&self) -> &[bool] {
        &self.vector_mask
    }

    pub fn element_mask(&self) -> &[bool] {
        &self.element_mask
    }

    #[inline]
    pub fn vector_kept(&self, tile: usize, col: usize) -> bool {
        self.vector_mask[tile * self.cols + col]
    }

    #[inline]
    pub fn element_kept(&self, row: usize, col: usize) -> bool {
        self.element_mask[row * self.cols + col]
    }

    /// Surviving column ids of `tile`, ascending.
    pub fn survivors(&self, tile: usize) -> Vec<usize> {
        (0..self.cols).filter(|&c| self.vector_kept(tile, c)).collect()
    }

    pub fn kept_elements(&self) -> usize {
        self.element_mask.iter().filter(|&&k| k).count()
    }

    /// Checks every HiNM invariant of this pair against `layout` and `perm`.
    pub fn validate(&self, layout: &Layout, perm: &GyroPermutation) -> Result<()> {
        let (n_keep, m_group) = (layout.nm_keep(), layout.nm_group());
        if self.shape() != layout.shape() || self.tiles != layout.tiles() {
            return Err(HinmError::InvariantViolation(format!(
                "mask shape {:?} with {} tiles does not match layout {:?}",
                self.shape(),
                self.tiles,
                layout.shape()
            )));
        }
        perm.validate(layout)?;
        for t in 0..self.tiles {
            let survivors = self.survivors(t);
            if survivors.len() != layout.vectors_per_tile() {
                return Err(HinmError::InvariantViolation(format!(
                    "tile {t} keeps {} vectors, budget is {}",
                    survivors.len(),
                    layout.vectors_per_tile()
                )));
            }
            let mut order = perm.sigma_i[t].clone();
            order.sort_unstable();
            if order != survivors {
                return Err(HinmError::InvariantViolation(format!(
                    "sigma_i[{t}] is not a permutation of the tile's surviving vectors"
                )));
            }
            for p in layout.tile_range(t) {
                let row = perm.sigma_o[p];
                for c in 0..self.cols {
                    if self.element_kept(row, c) && !self.vector_kept(t, c) {
                        return Err(HinmError::InvariantViolation(format!(
                            "element ({row}, {c}) kept inside a pruned vector of tile {t}"
                        )));
                    }
                }
                for group in perm.sigma_i[t].chunks(m_group) {
                    let kept = group.iter().filter(|&&c| self.element_kept(row, c)).count();
                    if kept != n_keep {
                        return Err(HinmError::InvariantViolation(format!(
                            "row {row} keeps {kept} of group {group:?}, expected {n_keep}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Output-channel order plus per-tile orders of surviving column vectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GyroPermutation {
    pub sigma_o: Vec<usize>,
    pub sigma_i: Vec<Vec<usize>>,
}

impl GyroPermutation {
    /// Identity output order with each tile's survivors in ascending order.
    pub fn identity(layout: &Layout, masks: &MaskPair) -> Self {
        Self {
            sigma_o: (0..layout.rows()).collect(),
            sigma_i: (0..layout.tiles()).map(|t| masks.survivors(t)).collect(),
        }
    }

    pub fn tiles(&self) -> usize {
        self.sigma_i.len()
    }

    /// Original rows of tile `t`, in permuted order.
    pub fn tile_rows<'a>(&'a self, layout: &Layout, t: usize) -> &'a [usize] {
        &self.sigma_o[layout.tile_range(t)]
    }

    /// Structural checks that do not need masks: `sigma_o` is a bijection,
    /// there is one `sigma_i` per tile, and each is duplicate-free.
    pub fn validate(&self, layout: &Layout) -> Result<()> {
        check_permutation(&self.sigma_o, layout.rows())?;
        if self.sigma_i.len() != layout.tiles() {
            return Err(HinmError::InvariantViolation(format!(
                "{} per-tile orders for {} tiles",
                self.sigma_i.len(),
                layout.tiles()
            )));
        }
        for (t, order) in self.sigma_i.iter().enumerate() {
            let mut sorted = order.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != order.len() || sorted.last().is_some_and(|&c| c >= layout.cols()) {
                return Err(HinmError::InvariantViolation(format!(
                    "sigma_i[{t}] has repeated or out-of-range column ids"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{validate_config, HiNMConfig};

    #[test]
    fn all_true_masks_validate_for_one_to_one() {
        let layout = validate_config(&HiNMConfig::new(2, 1, 1, 0.0), (4, 3)).unwrap();
        let masks = MaskPair::all_true(2, 4, 3);
        let perm = GyroPermutation::identity(&layout, &masks);
        masks.validate(&layout, &perm).unwrap();
        assert_eq!(perm.sigma_i, vec![vec![0, 1, 2], vec![0, 1, 2]]);
    }

    #[test]
    fn detects_broken_permutations() {
        let layout = validate_config(&HiNMConfig::new(2, 1, 1, 0.0), (4, 3)).unwrap();
        let masks = MaskPair::all_true(2, 4, 3);
        let mut perm = GyroPermutation::identity(&layout, &masks);
        perm.sigma_o = vec![0, 0, 1, 2];
        assert!(masks.validate(&layout, &perm).is_err());
        let mut perm = GyroPermutation::identity(&layout, &masks);
        perm.sigma_i[1] = vec![0, 1];
        assert!(masks.validate(&layout, &perm).is_err());
    }

    #[test]
    fn detects_kept_elements_in_pruned_vectors() {
        let layout = validate_config(&HiNMConfig::new(2, 1, 1, 0.5), (2, 2)).unwrap();
        // tile 0 keeps column 0 only, but row 1 keeps column 1.
        let masks = MaskPair::new(1, 2, 2, vec![true, false], vec![true, false, false, true]).unwrap();
        let perm = GyroPermutation {
            sigma_o: vec![0, 1],
            sigma_i: vec![vec![0]],
        };
        assert!(matches!(
            masks.validate(&layout, &perm),
            Err(HinmError::InvariantViolation(_))
        ));
    }
}
