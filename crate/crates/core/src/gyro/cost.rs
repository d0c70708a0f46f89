//! Assignment cost: saliency that pruning would remove if a candidate
//! joined what is left of a partition after sampling.

use crate::config::Layout;
use crate::error::{HinmError, Result};
use crate::matrix::SaliencyMatrix;
use crate::pruner::{top_k_indices, vector_scores};

use super::sampling::Axis;

#[derive(Debug, Clone, Copy)]
pub enum CostContext<'a> {
    /// Union members are output channels; pruning is column-wise vector
    /// pruning of the hypothetical tile.
    Output {
        saliency: &'a SaliencyMatrix,
        layout: &'a Layout,
    },
    /// Union members are column ids of one tile; pruning is N-of-M per row.
    Input {
        saliency: &'a SaliencyMatrix,
        tile_rows: &'a [usize],
        layout: &'a Layout,
    },
}

impl CostContext<'_> {
    pub fn axis(&self) -> Axis {
        match self {
            CostContext::Output { .. } => Axis::Output,
            CostContext::Input { .. } => Axis::Input,
        }
    }

    fn capacity(&self) -> usize {
        match self {
            CostContext::Output { layout, .. } => layout.vector_size(),
            CostContext::Input { layout, .. } => layout.nm_group(),
        }
    }
}

/// Pruned saliency of `remainder ∪ candidate` under the axis's pruning rule.
pub fn assignment_cost(ctx: CostContext<'_>, remainder: &[usize], candidate: &[usize]) -> Result<f64> {
    let size = remainder.len() + candidate.len();
    if size != ctx.capacity() {
        return Err(HinmError::Capacity(format!(
            "{:?} union has {size} members, capacity is {}",
            ctx.axis(),
            ctx.capacity()
        )));
    }
    let union: Vec<usize> = remainder.iter().chain(candidate).copied().collect();
    Ok(match ctx {
        CostContext::Output { saliency, layout } => {
            let scores = vector_scores(saliency, &union);
            pruned_sum(&scores, layout.vectors_per_tile())
        }
        CostContext::Input {
            saliency,
            tile_rows,
            layout,
        } => {
            let mut buf = Vec::with_capacity(size);
            tile_rows
                .iter()
                .map(|&r| {
                    let row = saliency.row(r);
                    buf.clear();
                    buf.extend(union.iter().map(|&c| row[c]));
                    pruned_sum(&buf, layout.nm_keep())
                })
                .sum()
        }
    })
}

/// Sum of everything outside the top `keep`.
fn pruned_sum(values: &[f64], keep: usize) -> f64 {
    let kept = top_k_indices(values, keep);
    values
        .iter()
        .enumerate()
        .filter(|(i, _)| kept.binary_search(i).is_err())
        .map(|(_, v)| v)
        .sum()
}
