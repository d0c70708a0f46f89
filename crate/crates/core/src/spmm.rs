//! Reference simulator for HiNM sparse x dense multiplication.
//!
//! For every tile the input rows named by the vector index are gathered into
//! a buffer (the shared-memory stage). Each output row then multiplies its
//! kept values against the buffer rows selected by the NM index. Output rows
//! come out in `sigma_o` order.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{HiNMEncoding, TileEncoding};
use crate::error::{HinmError, Result};
use crate::format::sig9;
use crate::matrix::{invert_permutation, DenseMatrix};

/// Plain `W * X`, accumulating in ascending inner index.
pub fn dense_matmul(w: &DenseMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    if w.cols() != x.rows() {
        return Err(HinmError::ShapeMismatch {
            expected: (w.cols(), x.cols()),
            actual: x.shape(),
        });
    }
    let mut out = DenseMatrix::zeros(w.rows(), x.cols());
    for i in 0..w.rows() {
        let acc = out.row_mut(i);
        for (k, &a) in w.row(i).iter().enumerate() {
            for (o, &b) in acc.iter_mut().zip(x.row(k)) {
                *o += a * b;
            }
        }
    }
    Ok(out)
}

/// Input rows gathered for one tile, in vector-index order.
#[derive(Debug, Clone, PartialEq)]
pub struct TileBuffer {
    width: usize,
    data: Vec<f32>,
}

impl TileBuffer {
    pub fn gather(x: &DenseMatrix, vector_index: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(vector_index.len() * x.cols());
        for &c in vector_index {
            if c >= x.rows() {
                return Err(HinmError::Index {
                    index: c,
                    len: x.rows(),
                });
            }
            data.extend_from_slice(x.row(c));
        }
        Ok(Self {
            width: x.cols(),
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.width
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.width..(i + 1) * self.width]
    }
}

/// Sparse-dense product from the compressed encoding. `x` is indexed by the
/// encoding's input channel ids.
pub fn hinm_spmm(enc: &HiNMEncoding, x: &DenseMatrix) -> Result<DenseMatrix> {
    let cfg = &enc.config;
    if x.rows() != cfg.cols {
        return Err(HinmError::ShapeMismatch {
            expected: (cfg.cols, x.cols()),
            actual: x.shape(),
        });
    }
    let mut out = DenseMatrix::zeros(cfg.rows, x.cols());
    for (t, tile) in enc.tiles.iter().enumerate() {
        let buffer = TileBuffer::gather(x, &tile.vector_index)?;
        for (i, (positions, values)) in tile.nm_index.iter().zip(&tile.kept_values).enumerate() {
            let acc = out.row_mut(t * cfg.vector_size + i);
            for (slot, (&pos, &v)) in positions.iter().zip(values).enumerate() {
                let src = (slot / cfg.nm_keep) * cfg.nm_group + pos;
                if src >= buffer.len() {
                    return Err(HinmError::InvariantViolation(format!(
                        "tile {t}: NM position {pos} points past the buffer"
                    )));
                }
                for (o, &b) in acc.iter_mut().zip(buffer.row(src)) {
                    *o += v * b;
                }
            }
        }
    }
    Ok(out)
}

/// `max |a - b| / max |b|`; zero when both are zero.
pub fn relative_error(actual: &DenseMatrix, reference: &DenseMatrix) -> f64 {
    assert_eq!(actual.shape(), reference.shape(), "relative_error needs equal shapes");
    let scale = reference
        .values()
        .iter()
        .fold(0.0f64, |m, &v| m.max(f64::from(v.abs())));
    let diff = actual
        .values()
        .iter()
        .zip(reference.values())
        .fold(0.0f64, |m, (&a, &b)| m.max((f64::from(a) - f64::from(b)).abs()));
    if diff == 0.0 {
        0.0
    } else {
        diff / scale.max(f64::MIN_POSITIVE)
    }
}

/// A reordering of one tile's vector index that keeps every N:M group
/// intact: groups may move as blocks and vectors may move within a group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileShuffle {
    /// `group_order[g']` is the old group placed at new group position `g'`.
    pub group_order: Vec<usize>,
    /// `slot_orders[g][s']` is the old slot of group `g` placed at slot `s'`.
    pub slot_orders: Vec<Vec<usize>>,
}

impl TileShuffle {
    pub fn identity(groups: usize, group_size: usize) -> Self {
        Self {
            group_order: (0..groups).collect(),
            slot_orders: vec![(0..group_size).collect(); groups],
        }
    }

    /// Reverses the whole vector index (group order and slots).
    pub fn reversal(groups: usize, group_size: usize) -> Self {
        Self {
            group_order: (0..groups).rev().collect(),
            slot_orders: vec![(0..group_size).rev().collect(); groups],
        }
    }

    pub fn random<R: Rng + ?Sized>(groups: usize, group_size: usize, rng: &mut R) -> Self {
        let mut s = Self::identity(groups, group_size);
        s.group_order.shuffle(rng);
        for slots in &mut s.slot_orders {
            slots.shuffle(rng);
        }
        s
    }
}

/// Applies one [`TileShuffle`] per tile, rewriting the NM index and kept
/// values so the same elements stay selected.
pub fn shuffle_tiles(enc: &HiNMEncoding, shuffles: &[TileShuffle]) -> Result<HiNMEncoding> {
    enc.validate()?;
    let cfg = &enc.config;
    if shuffles.len() != enc.tiles.len() {
        return Err(HinmError::InvariantViolation(format!(
            "{} shuffles for {} tiles",
            shuffles.len(),
            enc.tiles.len()
        )));
    }
    let (m, n) = (cfg.nm_group, cfg.nm_keep);
    let tiles = enc
        .tiles
        .iter()
        .zip(shuffles)
        .map(|(tile, sh)| {
            let groups = cfg.groups_per_tile();
            if sh.group_order.len() != groups
                || sh.slot_orders.len() != groups
                || crate::matrix::check_permutation(&sh.group_order, groups).is_err()
                || sh.slot_orders.iter().any(|s| crate::matrix::check_permutation(s, m).is_err())
            {
                return Err(HinmError::InvariantViolation("malformed tile shuffle".into()));
            }
            let mut vector_index = Vec::with_capacity(tile.vector_index.len());
            for &g in &sh.group_order {
                for &s in &sh.slot_orders[g] {
                    vector_index.push(tile.vector_index[g * m + s]);
                }
            }
            let mut nm_index = Vec::with_capacity(tile.nm_index.len());
            let mut kept_values = Vec::with_capacity(tile.kept_values.len());
            for (positions, values) in tile.nm_index.iter().zip(&tile.kept_values) {
                let mut new_pos = Vec::with_capacity(positions.len());
                let mut new_val = Vec::with_capacity(values.len());
                for &g in &sh.group_order {
                    let new_slot = invert_permutation(&sh.slot_orders[g]);
                    let mut entries: Vec<(usize, f32)> = positions[g * n..(g + 1) * n]
                        .iter()
                        .zip(&values[g * n..(g + 1) * n])
                        .map(|(&p, &v)| (new_slot[p], v))
                        .collect();
                    entries.sort_by_key(|e| e.0);
                    for (p, v) in entries {
                        new_pos.push(p);
                        new_val.push(v);
                    }
                }
                nm_index.push(new_pos);
                kept_values.push(new_val);
            }
            Ok(TileEncoding {
                vector_index,
                nm_index,
                kept_values,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HiNMEncoding {
        tiles,
        sigma_o: enc.sigma_o.clone(),
        config: enc.config,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuffleReport {
    pub kept_sets_identical: bool,
    pub bit_identical: bool,
    #[serde(serialize_with = "sig9::serialize")]
    pub max_relative_error: f64,
}

impl ShuffleReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.kept_sets_identical && self.max_relative_error <= tolerance
    }
}

/// Compares `enc` against a copy with every tile shuffled by `shuffles`.
pub fn tile_shuffle_check_with(
    enc: &HiNMEncoding,
    x: &DenseMatrix,
    shuffles: &[TileShuffle],
) -> Result<ShuffleReport> {
    let shuffled = shuffle_tiles(enc, shuffles)?;
    let before = hinm_spmm(enc, x)?;
    let after = hinm_spmm(&shuffled, x)?;
    Ok(ShuffleReport {
        kept_sets_identical: enc.kept_triples() == shuffled.kept_triples(),
        bit_identical: before == after,
        max_relative_error: relative_error(&after, &before),
    })
}

/// Randomly shuffles every tile's vector index and checks the product.
pub fn tile_shuffle_check<R: Rng + ?Sized>(
    enc: &HiNMEncoding,
    x: &DenseMatrix,
    rng: &mut R,
) -> Result<ShuffleReport> {
    let cfg = &enc.config;
    let shuffles: Vec<TileShuffle> = (0..enc.tiles.len())
        .map(|_| TileShuffle::random(cfg.groups_per_tile(), cfg.nm_group, rng))
        .collect();
    tile_shuffle_check_with(enc, x, &shuffles)
}

/// Layers run back to back. Each layer after the first has its vector index
/// rewritten offline into the previous layer's `sigma_o` output order, so no
/// permutation is needed between layers at run time.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerChain {
    layers: Vec<HiNMEncoding>,
}

impl LayerChain {
    pub fn new(layers: Vec<HiNMEncoding>) -> Result<Self> {
        if layers.is_empty() {
            return Err(HinmError::Dimension("a chain needs at least one layer".into()));
        }
        for layer in &layers {
            layer.validate()?;
        }
        let mut prepared = Vec::with_capacity(layers.len());
        prepared.push(layers[0].clone());
        for pair in layers.windows(2) {
            let (prev, next) = (&pair[0], &pair[1]);
            if next.config.cols != prev.config.rows {
                return Err(HinmError::ShapeMismatch {
                    expected: (next.config.rows, prev.config.rows),
                    actual: next.shape(),
                });
            }
            let position = invert_permutation(&prev.sigma_o);
            let mut layer = next.clone();
            for tile in &mut layer.tiles {
                for c in &mut tile.vector_index {
                    *c = position[*c];
                }
            }
            prepared.push(layer);
        }
        Ok(Self { layers: prepared })
    }

    /// Layers with their vector indices already pre-permuted.
    pub fn layers(&self) -> &[HiNMEncoding] {
        &self.layers
    }

    pub fn input_channels(&self) -> usize {
        self.layers[0].config.cols
    }
}

/// Runs the chain and undoes the last layer's output permutation, giving the
/// result in original channel order.
pub fn compose_layers(chain: &LayerChain, x: &DenseMatrix) -> Result<DenseMatrix> {
    let mut y = x.clone();
    for layer in chain.layers() {
        y = hinm_spmm(layer, &y)?;
    }
    let last = chain.layers().last().expect("chains are non-empty");
    y.scatter_rows(&last.sigma_o)
}

/// JSON manifest listing encoding files in execution order. Relative paths
/// resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainManifest {
    pub layers: Vec<PathBuf>,
}

impl ChainManifest {
    pub fn load_chain(path: impl AsRef<Path>) -> Result<LayerChain> {
        let path = path.as_ref();
        let manifest: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let layers = manifest
            .layers
            .iter()
            .map(|p| HiNMEncoding::load(base.join(p)))
            .collect::<Result<Vec<_>>>()?;
        LayerChain::new(layers)
    }
}
