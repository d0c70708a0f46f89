//! Exhaustive searches over balanced groupings, for tiny instances.
//!
//! Retention depends only on which channels share a group, so both searches
//! enumerate unordered balanced partitions rather than permutations.

use std::collections::HashMap;

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use serde::Serialize;

use crate::arith::balanced_groupings;
use crate::config::{validate_config, HiNMConfig, Layout};
use crate::error::{HinmError, Result};
use crate::format::sig9;
use crate::gyro::{gyro_permute, prune_identity};
use crate::matrix::SaliencyMatrix;
use crate::pruner::{tile_nm_retention, tile_vector_retention, top_k_indices, vector_scores, PruneReport};

/// Default cap on the number of groupings one search may enumerate.
pub const GROUPING_LIMIT: u64 = 1_000_000;

/// Best grouping found by a search, flattened group by group.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub retained: f64,
    pub order: Vec<usize>,
}

/// Calls `visit` with every partition of `items` into groups of `size`,
/// flattened. Each group lists members in `items` order and groups are
/// ordered by their first member.
pub fn for_each_grouping(items: &[usize], size: usize, mut visit: impl FnMut(&[usize])) {
    assert!(size > 0 && items.len().is_multiple_of(size), "items must split evenly");
    let mut used = vec![false; items.len()];
    let mut order = Vec::with_capacity(items.len());
    recurse(items, size, &mut used, &mut order, &mut visit);
}

fn recurse(
    items: &[usize],
    size: usize,
    used: &mut [bool],
    order: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    let Some(first) = used.iter().position(|&u| !u) else {
        visit(order);
        return;
    };
    used[first] = true;
    order.push(items[first]);
    fill(items, size, first + 1, size - 1, used, order, visit);
    order.pop();
    used[first] = false;
}

fn fill(
    items: &[usize],
    size: usize,
    start: usize,
    remaining: usize,
    used: &mut [bool],
    order: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    if remaining == 0 {
        recurse(items, size, used, order, visit);
        return;
    }
    for i in start..items.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        order.push(items[i]);
        fill(items, size, i + 1, remaining - 1, used, order, visit);
        order.pop();
        used[i] = false;
    }
}

fn guard(count: BigUint, limit: Option<u64>) -> Result<()> {
    if let Some(limit) = limit {
        if count.to_u64().is_none_or(|c| c > limit) {
            return Err(HinmError::SizeGuard {
                size: count.to_string(),
                limit,
            });
        }
    }
    Ok(())
}

/// Exhaustive searcher bound to a validated layout. `limit` caps the number
/// of groupings per search; `None` disables the guard.
#[derive(Debug, Clone)]
pub struct Oracle {
    layout: Layout,
    limit: Option<u64>,
}

impl Oracle {
    pub fn new(cfg: &HiNMConfig, shape: (usize, usize)) -> Result<Self> {
        Ok(Self {
            layout: validate_config(cfg, shape)?,
            limit: Some(GROUPING_LIMIT),
        })
    }

    pub fn with_limit(mut self, limit: Option<u64>) -> Self {
        self.limit = limit;
        self
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Number of output groupings the OCP search visits.
    pub fn ocp_groupings(&self) -> Result<BigUint> {
        balanced_groupings(self.layout.rows(), self.layout.vector_size())
    }

    /// Number of survivor groupings the ICP search visits per tile.
    pub fn icp_groupings(&self) -> Result<BigUint> {
        balanced_groupings(self.layout.vectors_per_tile(), self.layout.nm_group())
    }

    /// Best vector-pruned retention over all output groupings.
    pub fn ocp(&self, saliency: &SaliencyMatrix) -> Result<Optimum> {
        saliency.expect_shape(self.layout.shape())?;
        guard(self.ocp_groupings()?, self.limit)?;
        let (v, keep) = (self.layout.vector_size(), self.layout.vectors_per_tile());
        let rows: Vec<usize> = (0..self.layout.rows()).collect();
        let mut best: Option<Optimum> = None;
        for_each_grouping(&rows, v, |order| {
            let retained: f64 = order
                .chunks(v)
                .map(|tile| tile_vector_retention(saliency, tile, keep))
                .sum();
            if best.as_ref().is_none_or(|b| retained > b.retained) {
                best = Some(Optimum {
                    retained,
                    order: order.to_vec(),
                });
            }
        });
        Ok(best.expect("at least one grouping exists"))
    }

    /// Best N:M retention of the tile made of `tile_rows` over all groupings
    /// of `survivors` into groups of `M`.
    pub fn icp(&self, saliency: &SaliencyMatrix, tile_rows: &[usize], survivors: &[usize]) -> Result<Optimum> {
        saliency.expect_shape(self.layout.shape())?;
        let group = self.layout.nm_group();
        if survivors.is_empty() || !survivors.len().is_multiple_of(group) {
            return Err(HinmError::Grouping(format!(
                "{} survivors cannot form groups of {group}",
                survivors.len()
            )));
        }
        guard(balanced_groupings(survivors.len(), group)?, self.limit)?;
        Ok(self.icp_unchecked(saliency, tile_rows, survivors))
    }

    fn icp_unchecked(&self, saliency: &SaliencyMatrix, tile_rows: &[usize], survivors: &[usize]) -> Optimum {
        let mut best: Option<Optimum> = None;
        for_each_grouping(survivors, self.layout.nm_group(), |order| {
            let retained = tile_nm_retention(saliency, tile_rows, order, &self.layout);
            if best.as_ref().is_none_or(|b| retained > b.retained) {
                best = Some(Optimum {
                    retained,
                    order: order.to_vec(),
                });
            }
        });
        best.expect("at least one grouping exists")
    }

    /// Best final retention over every output grouping, with each tile's
    /// survivors grouped optimally. Survivors follow the same vector pruning
    /// rule as the pipeline.
    pub fn joint(&self, saliency: &SaliencyMatrix) -> Result<JointOptimum> {
        saliency.expect_shape(self.layout.shape())?;
        guard(self.ocp_groupings()?, self.limit)?;
        guard(self.icp_groupings()?, self.limit)?;
        let (v, keep) = (self.layout.vector_size(), self.layout.vectors_per_tile());
        let rows: Vec<usize> = (0..self.layout.rows()).collect();
        let mut cache: HashMap<Vec<usize>, Optimum> = HashMap::new();
        let mut best: Option<JointOptimum> = None;
        for_each_grouping(&rows, v, |order| {
            let mut retained = 0.0;
            let mut sigma_i = Vec::with_capacity(order.len() / v);
            for tile in order.chunks(v) {
                let opt = cache.entry(tile.to_vec()).or_insert_with(|| {
                    let survivors = top_k_indices(&vector_scores(saliency, tile), keep);
                    self.icp_unchecked(saliency, tile, &survivors)
                });
                retained += opt.retained;
                sigma_i.push(opt.order.clone());
            }
            if best.as_ref().is_none_or(|b| retained > b.retained) {
                best = Some(JointOptimum {
                    retained,
                    sigma_o: order.to_vec(),
                    sigma_i,
                });
            }
        });
        Ok(best.expect("at least one grouping exists"))
    }
}

/// Witness of the joint optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct JointOptimum {
    pub retained: f64,
    pub sigma_o: Vec<usize>,
    pub sigma_i: Vec<Vec<usize>>,
}

/// Optimal vector-pruned retention over all output groupings.
pub fn exhaustive_ocp(saliency: &SaliencyMatrix, cfg: &HiNMConfig) -> Result<Optimum> {
    Oracle::new(cfg, saliency.shape())?.ocp(saliency)
}

/// Optimal N:M retention of one tile over all groupings of its survivors.
pub fn exhaustive_icp(
    saliency: &SaliencyMatrix,
    cfg: &HiNMConfig,
    tile_rows: &[usize],
    survivors: &[usize],
) -> Result<Optimum> {
    Oracle::new(cfg, saliency.shape())?.icp(saliency, tile_rows, survivors)
}

/// Gyro run compared against no permutation and the joint optimum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    #[serde(flatten)]
    pub gyro: PruneReport,
    #[serde(serialize_with = "sig9::serialize")]
    pub no_perm_retained: f64,
    #[serde(serialize_with = "sig9::serialize")]
    pub gyro_retained: f64,
    #[serde(serialize_with = "sig9::serialize")]
    pub oracle_retained: f64,
    /// `(oracle - gyro) / (oracle - no_perm)`, zero when nothing is to gain.
    #[serde(serialize_with = "sig9::serialize")]
    pub gap: f64,
    pub oracle_sigma_o: Vec<usize>,
    pub oracle_sigma_i: Vec<Vec<usize>>,
}

impl OracleReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Sum of per-tile N:M retentions, computed the same way as the oracle so
/// equal groupings give bit-equal totals.
fn tiled_retention(saliency: &SaliencyMatrix, layout: &Layout, sigma_o: &[usize], sigma_i: &[Vec<usize>]) -> f64 {
    (0..layout.tiles())
        .map(|t| tile_nm_retention(saliency, &sigma_o[layout.tile_range(t)], &sigma_i[t], layout))
        .sum()
}

/// Relative gap of the gyro result to the exhaustive optimum.
pub fn gap_fraction(no_perm: f64, gyro: f64, oracle: f64) -> f64 {
    let tol = 1e-9 * oracle.abs().max(1.0);
    if oracle - no_perm <= tol || oracle - gyro <= tol {
        0.0
    } else {
        (oracle - gyro) / (oracle - no_perm)
    }
}

/// Runs gyro, no-perm and the joint oracle on one instance.
pub fn oracle_gap(saliency: &SaliencyMatrix, cfg: &HiNMConfig) -> Result<OracleReport> {
    oracle_gap_with(&Oracle::new(cfg, saliency.shape())?, saliency)
}

pub fn oracle_gap_with(oracle: &Oracle, saliency: &SaliencyMatrix) -> Result<OracleReport> {
    let layout = oracle.layout();
    let best = oracle.joint(saliency)?;
    let cfg = layout.config();
    let gyro = gyro_permute(saliency, cfg)?;
    let plain = prune_identity(saliency, cfg)?;
    let score = |p: &crate::model::GyroPermutation| tiled_retention(saliency, layout, &p.sigma_o, &p.sigma_i);
    let (no_perm, gyro_retained) = (score(&plain.permutation), score(&gyro.permutation));
    let gap = gap_fraction(no_perm, gyro_retained, best.retained);
    log::info!(
        "oracle gap {gap:.6}: no_perm {no_perm}, gyro {gyro_retained}, oracle {}",
        best.retained
    );
    Ok(OracleReport {
        gyro: gyro.report,
        no_perm_retained: no_perm,
        gyro_retained,
        oracle_retained: best.retained,
        gap,
        oracle_sigma_o: best.sigma_o,
        oracle_sigma_i: best.sigma_i,
    })
}
