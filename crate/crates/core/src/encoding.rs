//! Compressed HiNM encoding: per tile, a vector index listing the surviving
//! input columns in gather order, and per row the `N` kept values of every
//! group of `M` gathered vectors together with their within-group positions
//! (the NM index).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Layout;
use crate::error::{HinmError, Result};
use crate::matrix::{check_permutation, DenseMatrix};
use crate::model::{GyroPermutation, MaskPair};

/// Shape and pattern parameters carried alongside an encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingConfig {
    pub rows: usize,
    pub cols: usize,
    pub vector_size: usize,
    pub nm_keep: usize,
    pub nm_group: usize,
    pub vectors_per_tile: usize,
}

impl EncodingConfig {
    pub fn from_layout(layout: &Layout) -> Self {
        Self {
            rows: layout.rows(),
            cols: layout.cols(),
            vector_size: layout.vector_size(),
            nm_keep: layout.nm_keep(),
            nm_group: layout.nm_group(),
            vectors_per_tile: layout.vectors_per_tile(),
        }
    }

    pub fn tiles(&self) -> usize {
        self.rows / self.vector_size
    }

    pub fn groups_per_tile(&self) -> usize {
        self.vectors_per_tile / self.nm_group
    }

    /// Kept values (and NM positions) stored per row.
    pub fn kept_per_row(&self) -> usize {
        self.groups_per_tile() * self.nm_keep
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileEncoding {
    /// Surviving original column ids in gather order.
    pub vector_index: Vec<usize>,
    /// Per row: `N` strictly increasing positions in `[0, M)` for each group.
    pub nm_index: Vec<Vec<usize>>,
    /// Per row: the kept values, aligned with `nm_index`.
    pub kept_values: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiNMEncoding {
    pub tiles: Vec<TileEncoding>,
    pub sigma_o: Vec<usize>,
    pub config: EncodingConfig,
}

/// Compresses `weights` under `masks`, gathering vectors in `perm` order.
pub fn encode(
    weights: &DenseMatrix,
    masks: &MaskPair,
    perm: &GyroPermutation,
    layout: &Layout,
) -> Result<HiNMEncoding> {
    if weights.shape() != layout.shape() {
        return Err(HinmError::ShapeMismatch {
            expected: layout.shape(),
            actual: weights.shape(),
        });
    }
    masks.validate(layout, perm)?;
    let group = layout.nm_group();
    let tiles = (0..layout.tiles())
        .map(|t| {
            let order = &perm.sigma_i[t];
            let mut nm_index = Vec::with_capacity(layout.tile_rows());
            let mut kept_values = Vec::with_capacity(layout.tile_rows());
            for &r in perm.tile_rows(layout, t) {
                let mut positions = Vec::with_capacity(layout.groups_per_tile() * layout.nm_keep());
                let mut values = Vec::with_capacity(positions.capacity());
                for chunk in order.chunks(group) {
                    for (pos, &c) in chunk.iter().enumerate() {
                        if masks.element_kept(r, c) {
                            positions.push(pos);
                            values.push(weights.get(r, c));
                        }
                    }
                }
                nm_index.push(positions);
                kept_values.push(values);
            }
            TileEncoding {
                vector_index: order.clone(),
                nm_index,
                kept_values,
            }
        })
        .collect();
    Ok(HiNMEncoding {
        tiles,
        sigma_o: perm.sigma_o.clone(),
        config: EncodingConfig::from_layout(layout),
    })
}

/// Expands an encoding to a dense matrix with rows in `sigma_o` order and
/// columns at their original ids.
pub fn decode(enc: &HiNMEncoding, shape: (usize, usize)) -> Result<DenseMatrix> {
    enc.validate()?;
    let cfg = &enc.config;
    if shape != (cfg.rows, cfg.cols) {
        return Err(HinmError::ShapeMismatch {
            expected: (cfg.rows, cfg.cols),
            actual: shape,
        });
    }
    let mut out = DenseMatrix::zeros(cfg.rows, cfg.cols);
    for (t, tile) in enc.tiles.iter().enumerate() {
        for (i, (positions, values)) in tile.nm_index.iter().zip(&tile.kept_values).enumerate() {
            let p = t * cfg.vector_size + i;
            for (slot, (&pos, &v)) in positions.iter().zip(values).enumerate() {
                let g = slot / cfg.nm_keep;
                out.set(p, tile.vector_index[g * cfg.nm_group + pos], v);
            }
        }
    }
    Ok(out)
}

impl HiNMEncoding {
    pub fn shape(&self) -> (usize, usize) {
        (self.config.rows, self.config.cols)
    }

    /// Checks every structural invariant of the encoding.
    pub fn validate(&self) -> Result<()> {
        let cfg = &self.config;
        let bad = |msg: String| Err(HinmError::InvariantViolation(msg));
        if cfg.vector_size == 0 || cfg.nm_group == 0 || cfg.nm_keep == 0 || cfg.nm_keep > cfg.nm_group {
            return bad(format!("invalid pattern parameters {cfg:?}"));
        }
        if !cfg.rows.is_multiple_of(cfg.vector_size) || !cfg.vectors_per_tile.is_multiple_of(cfg.nm_group) {
            return bad(format!("inconsistent encoding geometry {cfg:?}"));
        }
        if cfg.vectors_per_tile > cfg.cols {
            return bad(format!("{} vectors per tile exceed {} columns", cfg.vectors_per_tile, cfg.cols));
        }
        check_permutation(&self.sigma_o, cfg.rows)?;
        if self.tiles.len() != cfg.tiles() {
            return bad(format!("{} tiles, expected {}", self.tiles.len(), cfg.tiles()));
        }
        for (t, tile) in self.tiles.iter().enumerate() {
            if tile.vector_index.len() != cfg.vectors_per_tile {
                return bad(format!("tile {t}: vector index has {} entries", tile.vector_index.len()));
            }
            let mut seen = vec![false; cfg.cols];
            for &c in &tile.vector_index {
                if c >= cfg.cols || std::mem::replace(&mut seen[c], true) {
                    return bad(format!("tile {t}: column {c} out of range or repeated"));
                }
            }
            if tile.nm_index.len() != cfg.vector_size || tile.kept_values.len() != cfg.vector_size {
                return bad(format!("tile {t}: expected {} rows", cfg.vector_size));
            }
            for (positions, values) in tile.nm_index.iter().zip(&tile.kept_values) {
                if positions.len() != cfg.kept_per_row() || values.len() != cfg.kept_per_row() {
                    return bad(format!("tile {t}: expected {} kept entries per row", cfg.kept_per_row()));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return bad(format!("tile {t}: non-finite kept value"));
                }
                for group in positions.chunks(cfg.nm_keep) {
                    let increasing = group.windows(2).all(|w| w[0] < w[1]);
                    if !increasing || group.iter().any(|&p| p >= cfg.nm_group) {
                        return bad(format!("tile {t}: NM index group {group:?} is malformed"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Every kept element as `(original row, column, value bits)`, sorted.
    pub fn kept_triples(&self) -> Vec<(usize, usize, u32)> {
        let cfg = &self.config;
        let mut out = Vec::new();
        for (t, tile) in self.tiles.iter().enumerate() {
            for (i, (positions, values)) in tile.nm_index.iter().zip(&tile.kept_values).enumerate() {
                let row = self.sigma_o[t * cfg.vector_size + i];
                for (slot, (&pos, &v)) in positions.iter().zip(values).enumerate() {
                    let col = tile.vector_index[(slot / cfg.nm_keep) * cfg.nm_group + pos];
                    out.push((row, col, v.to_bits()));
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let enc: Self = serde_json::from_str(text)?;
        enc.validate()?;
        Ok(enc)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{validate_config, HiNMConfig};
    use crate::pruner::{apply_masks, magnitude_saliency, prune_with, prune_without_permutation};

    fn ramp(rows: usize, cols: usize) -> DenseMatrix {
        let vals = (0..rows * cols)
            .map(|i| ((i * 29 + 7) % 23) as f32 - 11.5)
            .collect();
        DenseMatrix::new(rows, cols, vals).unwrap()
    }

    #[test]
    fn dense_masks_encode_full_rows() {
        let w = ramp(4, 3);
        let layout = validate_config(&HiNMConfig::new(2, 1, 1, 0.0), (4, 3)).unwrap();
        let masks = MaskPair::all_true(2, 4, 3);
        let perm = GyroPermutation::identity(&layout, &masks);
        let enc = encode(&w, &masks, &perm, &layout).unwrap();
        for (t, tile) in enc.tiles.iter().enumerate() {
            assert_eq!(tile.vector_index, vec![0, 1, 2]);
            for (i, row) in tile.kept_values.iter().enumerate() {
                assert_eq!(row.as_slice(), w.row(t * 2 + i));
            }
            assert!(tile.nm_index.iter().all(|p| p == &vec![0, 0, 0]));
        }
        assert_eq!(decode(&enc, (4, 3)).unwrap(), w);
    }

    #[test]
    fn half_vector_two_four_encoding_on_8x8() {
        let w = ramp(8, 8);
        let layout = validate_config(&HiNMConfig::new(4, 2, 4, 0.5), (8, 8)).unwrap();
        let s = magnitude_saliency(&w);
        let (perm, masks) = prune_without_permutation(&s, &layout).unwrap();
        let enc = encode(&w, &masks, &perm, &layout).unwrap();
        assert_eq!(enc.tiles.len(), 2);
        for tile in &enc.tiles {
            assert_eq!(tile.vector_index.len(), 4);
            for positions in &tile.nm_index {
                assert_eq!(positions.len(), 2);
                assert!(positions.iter().all(|&p| p < 4));
            }
        }
        let decoded = decode(&enc, (8, 8)).unwrap();
        assert_eq!(decoded, apply_masks(&w, &masks).unwrap());
        assert_eq!(decoded.count_zeros(), 48);
    }

    #[test]
    fn decode_restores_sigma_o_row_order() {
        let w = ramp(4, 8);
        let layout = validate_config(&HiNMConfig::new(2, 1, 2, 0.5), (4, 8)).unwrap();
        let s = magnitude_saliency(&w);
        let sigma_o = vec![3, 1, 0, 2];
        let vm = crate::pruner::vector_prune(&s, &layout, &sigma_o).unwrap();
        let perm = GyroPermutation {
            sigma_i: (0..2).map(|t| vm.survivors(t).into_iter().rev().collect()).collect(),
            sigma_o,
        };
        let masks = prune_with(&s, &layout, &perm).unwrap();
        let enc = encode(&w, &masks, &perm, &layout).unwrap();
        let expected = apply_masks(&w, &masks).unwrap().gather_rows(&perm.sigma_o).unwrap();
        assert_eq!(decode(&enc, (4, 8)).unwrap(), expected);
    }

    #[test]
    fn validation_catches_malformed_encodings() {
        let w = ramp(4, 8);
        let layout = validate_config(&HiNMConfig::new(2, 1, 2, 0.5), (4, 8)).unwrap();
        let (perm, masks) = prune_without_permutation(&magnitude_saliency(&w), &layout).unwrap();
        let enc = encode(&w, &masks, &perm, &layout).unwrap();
        assert!(enc.validate().is_ok());

        let mut bad = enc.clone();
        bad.tiles[0].vector_index[1] = bad.tiles[0].vector_index[0];
        assert!(bad.validate().is_err());
        let mut bad = enc.clone();
        bad.tiles[1].nm_index[0][0] = 2;
        assert!(bad.validate().is_err());
        let mut bad = enc.clone();
        bad.sigma_o[0] = 1;
        assert!(bad.validate().is_err());
        assert!(matches!(decode(&enc, (4, 4)), Err(HinmError::ShapeMismatch { .. })));
    }

    #[test]
    fn encode_rejects_masks_violating_nm() {
        let w = ramp(2, 4);
        let layout = validate_config(&HiNMConfig::new(2, 2, 4, 0.0), (2, 4)).unwrap();
        let masks = MaskPair::all_true(1, 2, 4);
        let perm = GyroPermutation::identity(&layout, &masks);
        assert!(matches!(
            encode(&w, &masks, &perm, &layout),
            Err(HinmError::InvariantViolation(_))
        ));
    }

    #[test]
    fn json_round_trip() {
        let w = ramp(4, 8);
        let layout = validate_config(&HiNMConfig::new(2, 1, 2, 0.5), (4, 8)).unwrap();
        let (perm, masks) = prune_without_permutation(&magnitude_saliency(&w), &layout).unwrap();
        let enc = encode(&w, &masks, &perm, &layout).unwrap();
        let text = enc.to_json().unwrap();
        assert!(text.contains("\"vector_index\"") && text.contains("\"nm_index\""));
        assert_eq!(HiNMEncoding::from_json(&text).unwrap(), enc);
    }
}
