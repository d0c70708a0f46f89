//! Saliency scoring and the two pruning levels.
//!
//! Vector pruning runs first: within each tile every column forms a `V x 1`
//! vector scored by the sum of its saliencies, and the `k_v` best vectors
//! survive. N:M pruning then keeps the `N` most salient elements of every
//! group of `M` consecutive surviving vectors, per row.

use serde::{Deserialize, Serialize};

use crate::config::{HiNMConfig, Layout};
use crate::error::{HinmError, Result};
use crate::format::sig9;
use crate::matrix::{check_permutation, DenseMatrix, SaliencyMatrix};
use crate::model::{GyroPermutation, MaskPair};

/// `|w|` for every weight.
pub fn magnitude_saliency(weights: &DenseMatrix) -> SaliencyMatrix {
    let scores = weights.values().iter().map(|w| f64::from(w.abs())).collect();
    SaliencyMatrix::new(weights.rows(), weights.cols(), scores)
        .expect("absolute values of finite weights are valid scores")
}

/// Indices of the `k` largest scores, ties to the lowest index, returned in
/// ascending index order.
pub fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Sum of the `k` largest values.
pub fn top_k_sum(values: &[f64], k: usize) -> f64 {
    top_k_indices(values, k).iter().map(|&i| values[i]).sum()
}

/// Column-vector scores of a tile made of the given original rows.
pub fn vector_scores(saliency: &SaliencyMatrix, rows: &[usize]) -> Vec<f64> {
    let mut scores = vec![0.0; saliency.cols()];
    for &r in rows {
        for (acc, s) in scores.iter_mut().zip(saliency.row(r)) {
            *acc += s;
        }
    }
    scores
}

/// Saliency kept by vector pruning a tile made of `rows`.
pub fn tile_vector_retention(saliency: &SaliencyMatrix, rows: &[usize], keep: usize) -> f64 {
    top_k_sum(&vector_scores(saliency, rows), keep)
}

/// Saliency kept by vector pruning under `sigma_o` (no N:M pruning).
pub fn vector_retention(saliency: &SaliencyMatrix, layout: &Layout, sigma_o: &[usize]) -> f64 {
    (0..layout.tiles())
        .map(|t| tile_vector_retention(saliency, &sigma_o[layout.tile_range(t)], layout.vectors_per_tile()))
        .sum()
}

/// Saliency kept by N:M pruning of the given rows over the given ordered
/// columns.
pub fn tile_nm_retention(
    saliency: &SaliencyMatrix,
    rows: &[usize],
    order: &[usize],
    layout: &Layout,
) -> f64 {
    let mut kept = 0.0;
    let mut buf = Vec::with_capacity(layout.nm_group());
    for &r in rows {
        let row = saliency.row(r);
        for group in order.chunks(layout.nm_group()) {
            buf.clear();
            buf.extend(group.iter().map(|&c| row[c]));
            kept += top_k_sum(&buf, layout.nm_keep());
        }
    }
    kept
}

/// Per-tile keep/drop decision for every column vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VectorMask {
    tiles: usize,
    cols: usize,
    kept: Vec<bool>,
}

impl VectorMask {
    pub fn kept(&self, tile: usize, col: usize) -> bool {
        self.kept[tile * self.cols + col]
    }

    pub fn survivors(&self, tile: usize) -> Vec<usize> {
        (0..self.cols).filter(|&c| self.kept(tile, c)).collect()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.kept
    }
}

/// Column-wise vector pruning of `saliency` with rows ordered by `sigma_o`.
pub fn vector_prune(
    saliency: &SaliencyMatrix,
    layout: &Layout,
    sigma_o: &[usize],
) -> Result<VectorMask> {
    saliency.expect_shape(layout.shape())?;
    check_permutation(sigma_o, layout.rows())?;
    let keep = layout.vectors_per_tile();
    if !keep.is_multiple_of(layout.nm_group()) {
        return Err(HinmError::Budget(format!(
            "{keep} vectors per tile is not a multiple of {}",
            layout.nm_group()
        )));
    }
    let cols = layout.cols();
    let mut kept = vec![false; layout.tiles() * cols];
    for t in 0..layout.tiles() {
        let scores = vector_scores(saliency, &sigma_o[layout.tile_range(t)]);
        for c in top_k_indices(&scores, keep) {
            kept[t * cols + c] = true;
        }
    }
    Ok(VectorMask {
        tiles: layout.tiles(),
        cols,
        kept,
    })
}

/// Row-wise N:M pruning over the surviving vectors, grouped in `perm.sigma_i`
/// order. Returns the element mask in original coordinates.
pub fn nm_prune(
    saliency: &SaliencyMatrix,
    vectors: &VectorMask,
    layout: &Layout,
    perm: &GyroPermutation,
) -> Result<Vec<bool>> {
    saliency.expect_shape(layout.shape())?;
    perm.validate(layout)?;
    let (cols, group, keep) = (layout.cols(), layout.nm_group(), layout.nm_keep());
    let mut mask = vec![false; layout.rows() * cols];
    let mut buf = Vec::with_capacity(group);
    for t in 0..layout.tiles() {
        let order = &perm.sigma_i[t];
        if !order.len().is_multiple_of(group) {
            return Err(HinmError::Grouping(format!(
                "tile {t} has {} surviving vectors, not a multiple of {group}",
                order.len()
            )));
        }
        let mut sorted = order.clone();
        sorted.sort_unstable();
        if sorted != vectors.survivors(t) {
            return Err(HinmError::InvariantViolation(format!(
                "sigma_i[{t}] does not match the tile's surviving vectors"
            )));
        }
        for &r in perm.tile_rows(layout, t) {
            let row = saliency.row(r);
            for chunk in order.chunks(group) {
                buf.clear();
                buf.extend(chunk.iter().map(|&c| row[c]));
                for pos in top_k_indices(&buf, keep) {
                    mask[r * cols + chunk[pos]] = true;
                }
            }
        }
    }
    Ok(mask)
}

/// Runs both pruning levels under a fixed permutation.
pub fn prune_with(
    saliency: &SaliencyMatrix,
    layout: &Layout,
    perm: &GyroPermutation,
) -> Result<MaskPair> {
    let vectors = vector_prune(saliency, layout, &perm.sigma_o)?;
    let elements = nm_prune(saliency, &vectors, layout, perm)?;
    MaskPair::new(layout.tiles(), layout.rows(), layout.cols(), vectors.kept, elements)
}

/// HiNM pruning with identity output order and ascending survivor order.
pub fn prune_without_permutation(
    saliency: &SaliencyMatrix,
    layout: &Layout,
) -> Result<(GyroPermutation, MaskPair)> {
    let sigma_o: Vec<usize> = (0..layout.rows()).collect();
    let vectors = vector_prune(saliency, layout, &sigma_o)?;
    let perm = GyroPermutation {
        sigma_i: (0..layout.tiles()).map(|t| vectors.survivors(t)).collect(),
        sigma_o,
    };
    let elements = nm_prune(saliency, &vectors, layout, &perm)?;
    let masks = MaskPair::new(layout.tiles(), layout.rows(), layout.cols(), vectors.kept, elements)?;
    Ok((perm, masks))
}

/// Hadamard product of the weights with the element mask.
pub fn apply_masks(weights: &DenseMatrix, masks: &MaskPair) -> Result<DenseMatrix> {
    if weights.shape() != masks.shape() {
        return Err(HinmError::ShapeMismatch {
            expected: masks.shape(),
            actual: weights.shape(),
        });
    }
    let values = weights
        .values()
        .iter()
        .zip(masks.element_mask())
        .map(|(&w, &k)| if k { w } else { 0.0 })
        .collect();
    DenseMatrix::new(weights.rows(), weights.cols(), values)
}

/// Sum of saliency over kept elements.
pub fn retained_saliency(saliency: &SaliencyMatrix, masks: &MaskPair) -> Result<f64> {
    if saliency.shape() != masks.shape() {
        return Err(HinmError::ShapeMismatch {
            expected: masks.shape(),
            actual: saliency.shape(),
        });
    }
    Ok(saliency
        .scores()
        .iter()
        .zip(masks.element_mask())
        .filter(|(_, &k)| k)
        .map(|(s, _)| s)
        .sum())
}

/// Outcome summary of a pruning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub variant: String,
    pub rows: usize,
    pub cols: usize,
    #[serde(serialize_with = "sig9::serialize")]
    pub total_saliency: f64,
    #[serde(serialize_with = "sig9::serialize")]
    pub retained_saliency: f64,
    pub vector_zero_count: usize,
    pub nm_zero_count: usize,
    pub zero_count: usize,
    pub tile_survivors: Vec<Vec<usize>>,
    /// Vector-level retained saliency before the first and after every OCP
    /// iteration.
    #[serde(serialize_with = "sig9::serialize_vec")]
    pub ocp_log: Vec<f64>,
    /// Per-tile N:M retained saliency before the first and after every ICP
    /// iteration.
    #[serde(serialize_with = "sig9::serialize_nested")]
    pub icp_logs: Vec<Vec<f64>>,
    /// Set when the permuted result was replaced by the identity output order.
    pub identity_fallback: bool,
    pub config: HiNMConfig,
}

impl PruneReport {
    pub fn new(
        variant: impl Into<String>,
        saliency: &SaliencyMatrix,
        layout: &Layout,
        masks: &MaskPair,
    ) -> Result<Self> {
        let kept = masks.kept_elements();
        let total = layout.rows() * layout.cols();
        if kept != layout.kept_count() {
            return Err(HinmError::InvariantViolation(format!(
                "masks keep {kept} elements, layout expects {}",
                layout.kept_count()
            )));
        }
        Ok(Self {
            variant: variant.into(),
            rows: layout.rows(),
            cols: layout.cols(),
            total_saliency: saliency.total(),
            retained_saliency: retained_saliency(saliency, masks)?,
            vector_zero_count: layout.vector_zero_count(),
            nm_zero_count: layout.nm_zero_count(),
            zero_count: total - kept,
            tile_survivors: (0..layout.tiles()).map(|t| masks.survivors(t)).collect(),
            ocp_log: Vec::new(),
            icp_logs: Vec::new(),
            identity_fallback: false,
            config: layout.config().clone(),
        })
    }

    /// Deterministic JSON with floats at nine significant digits.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
