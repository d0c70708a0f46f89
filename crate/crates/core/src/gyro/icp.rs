//! Tile-wise input-channel permutation.
//!
//! Partitions are the N:M groups of a tile's surviving column vectors. Each
//! iteration samples one vector from every group; the sample count already
//! equals the group count, so clustering is skipped and the Hungarian
//! algorithm assigns samples back to groups directly.

use rand::Rng;

use crate::config::Layout;
use crate::error::{HinmError, Result};
use crate::matrix::SaliencyMatrix;
use crate::pruner::tile_nm_retention;

use super::cost::{assignment_cost, CostContext};
use super::hungarian::{hungarian, CostMatrix};
use super::sampling::{sample_channels, Axis, Partition};

/// Result of permuting one tile.
#[derive(Debug, Clone, PartialEq)]
pub struct TilePermutation {
    pub order: Vec<usize>,
    /// Retained N:M saliency before the first and after every iteration.
    pub log: Vec<f64>,
}

fn check_grouping(order: &[usize], layout: &Layout) -> Result<()> {
    if !order.len().is_multiple_of(layout.nm_group()) {
        return Err(HinmError::Grouping(format!(
            "{} surviving vectors cannot form groups of {}",
            order.len(),
            layout.nm_group()
        )));
    }
    Ok(())
}

/// Hungarian-based ICP on the tile made of `tile_rows`, starting from
/// `order`. Stops after `icp_max_iters` iterations or `icp_patience`
/// consecutive iterations without improvement.
pub fn icp_tile<R: Rng + ?Sized>(
    saliency: &SaliencyMatrix,
    tile_rows: &[usize],
    order: Vec<usize>,
    layout: &Layout,
    rng: &mut R,
) -> Result<TilePermutation> {
    check_grouping(&order, layout)?;
    let group = layout.nm_group();
    let groups = order.len() / group;
    let mut best = tile_nm_retention(saliency, tile_rows, &order, layout);
    let mut log = vec![best];
    if groups < 2 || group == 1 {
        return Ok(TilePermutation { order, log });
    }

    let ctx = CostContext::Input {
        saliency,
        tile_rows,
        layout,
    };
    let mut order = order;
    let mut stale = 0;
    for _ in 0..layout.icp_max_iters() {
        let partitions: Vec<Partition> = order
            .chunks(group)
            .map(|c| Partition::new(Axis::Input, c.to_vec()))
            .collect();
        let sampled = sample_channels(&partitions, 1, rng)?;
        let mut entries = Vec::with_capacity(groups * groups);
        for s in &sampled {
            for candidate in &sampled {
                entries.push(assignment_cost(ctx, &s.remainder, &candidate.samples)?);
            }
        }
        let assignment = hungarian(&CostMatrix::new(groups, entries)?);
        let candidate: Vec<usize> = sampled
            .iter()
            .zip(&assignment.columns)
            .flat_map(|(s, &j)| s.refill(&sampled[j].samples))
            .collect();
        let retained = tile_nm_retention(saliency, tile_rows, &candidate, layout);
        if retained > best {
            order = candidate;
            best = retained;
            stale = 0;
        } else {
            stale += 1;
        }
        log.push(best);
        if stale >= layout.icp_patience() {
            break;
        }
    }
    Ok(TilePermutation { order, log })
}

/// Greedy pairwise vector swapping: repeatedly apply the single swap between
/// two groups with the largest retained-saliency gain, until none helps or
/// `icp_max_iters` swaps were made.
pub fn greedy_swap_tile(
    saliency: &SaliencyMatrix,
    tile_rows: &[usize],
    order: Vec<usize>,
    layout: &Layout,
) -> Result<TilePermutation> {
    check_grouping(&order, layout)?;
    let group = layout.nm_group();
    let groups = order.len() / group;
    let mut order = order;
    let group_value = |order: &[usize], g: usize| {
        tile_nm_retention(saliency, tile_rows, &order[g * group..(g + 1) * group], layout)
    };
    let mut values: Vec<f64> = (0..groups).map(|g| group_value(&order, g)).collect();
    let mut log = vec![tile_nm_retention(saliency, tile_rows, &order, layout)];
    if groups < 2 || group == 1 {
        return Ok(TilePermutation { order, log });
    }

    for _ in 0..layout.icp_max_iters() {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..order.len() {
            for b in (a / group + 1) * group..order.len() {
                order.swap(a, b);
                let (ga, gb) = (a / group, b / group);
                let gain = group_value(&order, ga) + group_value(&order, gb) - values[ga] - values[gb];
                order.swap(a, b);
                if gain > 0.0 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, a, b));
                }
            }
        }
        let Some((_, a, b)) = best else { break };
        order.swap(a, b);
        values[a / group] = group_value(&order, a / group);
        values[b / group] = group_value(&order, b / group);
        let retained = tile_nm_retention(saliency, tile_rows, &order, layout);
        let last = *log.last().unwrap();
        if retained <= last {
            // Rounding made the swap look better than it is.
            order.swap(a, b);
            break;
        }
        log.push(retained);
    }
    Ok(TilePermutation { order, log })
}
