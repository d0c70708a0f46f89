//! Output-channel permutation.
//!
//! One iteration samples `k` channels from every `V`-channel partition,
//! groups the pooled samples into `P_o` balanced clusters of `k`, prices
//! every (partition, cluster) pairing by the saliency vector pruning would
//! remove, and lets the Hungarian algorithm pick the pairing. Iterations
//! that do not strictly raise the vector-level retained saliency are
//! discarded.

use log::debug;
use rand::Rng;

use crate::config::Layout;
use crate::error::Result;
use crate::matrix::SaliencyMatrix;
use crate::pruner::vector_retention;

use super::cost::{assignment_cost, CostContext};
use super::hungarian::{hungarian, CostMatrix};
use super::kmeans::balanced_kmeans;
use super::sampling::{sample_channels, Axis, Partition};

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleState {
    /// Iterations performed so far.
    pub iteration: usize,
    /// Sample count used by the latest iteration.
    pub samples_per_partition: usize,
    /// Best vector-level retained saliency so far.
    pub best_retained: f64,
    /// `best_retained` before the first and after every iteration.
    pub log: Vec<f64>,
}

impl ScheduleState {
    pub fn new(saliency: &SaliencyMatrix, layout: &Layout, sigma_o: &[usize]) -> Self {
        let retained = vector_retention(saliency, layout, sigma_o);
        Self {
            iteration: 0,
            samples_per_partition: 0,
            best_retained: retained,
            log: vec![retained],
        }
    }
}

/// Runs one sampling/clustering/assignment round. Returns whether `sigma_o`
/// changed.
pub fn ocp_iterate<R: Rng + ?Sized>(
    saliency: &SaliencyMatrix,
    sigma_o: &mut Vec<usize>,
    layout: &Layout,
    state: &mut ScheduleState,
    rng: &mut R,
) -> Result<bool> {
    let k = layout.ocp_samples(state.iteration);
    state.iteration += 1;
    state.samples_per_partition = k;
    let parts = layout.output_partitions();
    if parts < 2 {
        state.log.push(state.best_retained);
        return Ok(false);
    }

    let v = layout.vector_size();
    let partitions: Vec<Partition> = sigma_o
        .chunks(v)
        .map(|c| Partition::new(Axis::Output, c.to_vec()))
        .collect();
    let sampled = sample_channels(&partitions, k, rng)?;
    let pool: Vec<usize> = sampled.iter().flat_map(|s| s.samples.iter().copied()).collect();
    let features: Vec<&[f64]> = pool.iter().map(|&r| saliency.row(r)).collect();
    let clusters: Vec<Vec<usize>> = balanced_kmeans(&features, parts, k, rng)?
        .into_iter()
        .map(|c| c.into_iter().map(|i| pool[i]).collect())
        .collect();

    let ctx = CostContext::Output { saliency, layout };
    let mut entries = Vec::with_capacity(parts * parts);
    for s in &sampled {
        for cluster in &clusters {
            entries.push(assignment_cost(ctx, &s.remainder, cluster)?);
        }
    }
    let assignment = hungarian(&CostMatrix::new(parts, entries)?);

    let mut candidate = Vec::with_capacity(sigma_o.len());
    for (s, &j) in sampled.iter().zip(&assignment.columns) {
        candidate.extend(s.refill(&clusters[j]));
    }
    let retained = vector_retention(saliency, layout, &candidate);
    let accepted = retained > state.best_retained;
    debug!(
        "ocp iter {} k={k}: candidate {retained:.6} vs best {:.6} -> {}",
        state.iteration,
        state.best_retained,
        if accepted { "accept" } else { "reject" }
    );
    if accepted {
        *sigma_o = candidate;
        state.best_retained = retained;
    }
    state.log.push(state.best_retained);
    Ok(accepted)
}

/// Runs the configured number of OCP iterations from the identity order.
pub fn output_channel_permutation<R: Rng + ?Sized>(
    saliency: &SaliencyMatrix,
    layout: &Layout,
    rng: &mut R,
) -> Result<(Vec<usize>, ScheduleState)> {
    let mut sigma_o: Vec<usize> = (0..layout.rows()).collect();
    let mut state = ScheduleState::new(saliency, layout, &sigma_o);
    for _ in 0..layout.ocp_max_iters() {
        ocp_iterate(saliency, &mut sigma_o, layout, &mut state, rng)?;
    }
    Ok((sigma_o, state))
}

/// One-shot balanced k-means over all output channels, without sampling or
/// assignment. Returns the order and its vector-level retained saliency log.
pub fn one_shot_clustering<R: Rng + ?Sized>(
    saliency: &SaliencyMatrix,
    layout: &Layout,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let identity: Vec<usize> = (0..layout.rows()).collect();
    let before = vector_retention(saliency, layout, &identity);
    let features: Vec<&[f64]> = identity.iter().map(|&r| saliency.row(r)).collect();
    let sigma_o = balanced_kmeans(&features, layout.output_partitions(), layout.vector_size(), rng)?.concat();
    let after = vector_retention(saliency, layout, &sigma_o);
    Ok((sigma_o, vec![before, after]))
}
