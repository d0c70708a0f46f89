//! Gyro-permutation: output-channel permutation, then vector pruning, then
//! tile-wise input-channel permutation, then N:M pruning.

pub mod cost;
pub mod hungarian;
pub mod icp;
pub mod kmeans;
pub mod ocp;
pub mod sampling;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{validate_config, HiNMConfig, Layout};
use crate::error::Result;
use crate::matrix::{DenseMatrix, SaliencyMatrix};
use crate::model::{GyroPermutation, MaskPair};
use crate::pruner::{
    magnitude_saliency, nm_prune, prune_without_permutation, retained_saliency, vector_prune,
    PruneReport,
};

pub use cost::{assignment_cost, CostContext};
pub use hungarian::{hungarian, Assignment, CostMatrix};
pub use icp::{greedy_swap_tile, icp_tile, TilePermutation};
pub use kmeans::balanced_kmeans;
pub use ocp::{ocp_iterate, one_shot_clustering, output_channel_permutation, ScheduleState};
pub use sampling::{sample_channels, Axis, Partition, SampledPartition};

/// Which permutation strategy a [`Pipeline`] runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Scheduled sampling + balanced k-means + Hungarian on both axes.
    #[default]
    Full,
    /// OCP replaced by one balanced k-means pass over all output channels.
    V1NoSamplingKmeansAll,
    /// ICP replaced by greedy pairwise vector swapping.
    V2ChannelSwapIcp,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::V1NoSamplingKmeansAll => "v1_no_sampling_kmeans_all",
            Variant::V2ChannelSwapIcp => "v2_channel_swap_icp",
        }
    }
}

/// Everything a permutation run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct GyroOutcome {
    pub permutation: GyroPermutation,
    pub masks: MaskPair,
    pub report: PruneReport,
}

/// A validated configuration bound to a permutation strategy.
#[derive(Debug, Clone)]
pub struct Pipeline {
    layout: Layout,
    variant: Variant,
}

/// Configures a pipeline for `shape` running `variant`.
pub fn ablation_mode(cfg: &HiNMConfig, shape: (usize, usize), variant: Variant) -> Result<Pipeline> {
    Ok(Pipeline {
        layout: validate_config(cfg, shape)?,
        variant,
    })
}

/// Full gyro-permutation of a saliency map.
pub fn gyro_permute(saliency: &SaliencyMatrix, cfg: &HiNMConfig) -> Result<GyroOutcome> {
    ablation_mode(cfg, saliency.shape(), Variant::Full)?.run(saliency)
}

/// Full gyro-permutation using magnitude saliency of `weights`.
pub fn gyro_permute_weights(weights: &DenseMatrix, cfg: &HiNMConfig) -> Result<GyroOutcome> {
    gyro_permute(&magnitude_saliency(weights), cfg)
}

/// HiNM pruning without any permutation, reported like a gyro run.
pub fn prune_identity(saliency: &SaliencyMatrix, cfg: &HiNMConfig) -> Result<GyroOutcome> {
    let layout = validate_config(cfg, saliency.shape())?;
    let (permutation, masks) = prune_without_permutation(saliency, &layout)?;
    let report = PruneReport::new("no_perm", saliency, &layout, &masks)?;
    Ok(GyroOutcome {
        permutation,
        masks,
        report,
    })
}

impl Pipeline {
    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn run(&self, saliency: &SaliencyMatrix) -> Result<GyroOutcome> {
        let layout = &self.layout;
        saliency.expect_shape(layout.shape())?;
        let mut rng = ChaCha8Rng::seed_from_u64(layout.seed());

        let (sigma_o, ocp_log) = match self.variant {
            Variant::V1NoSamplingKmeansAll => one_shot_clustering(saliency, layout, &mut rng)?,
            Variant::Full | Variant::V2ChannelSwapIcp => {
                let (sigma_o, state) = output_channel_permutation(saliency, layout, &mut rng)?;
                (sigma_o, state.log)
            }
        };

        let (mut permutation, mut masks, mut icp_logs) = self.finish(saliency, sigma_o)?;
        let mut fallback = false;
        if self.variant == Variant::Full {
            let (_, baseline) = prune_without_permutation(saliency, layout)?;
            let reference = retained_saliency(saliency, &baseline)?;
            if retained_saliency(saliency, &masks)? < reference {
                // The OCP gain did not survive N:M pruning; redo ICP on the
                // identity output order, which can only improve on no-perm.
                (permutation, masks, icp_logs) = self.finish(saliency, (0..layout.rows()).collect())?;
                fallback = true;
            }
        }

        masks.validate(layout, &permutation)?;
        let mut report = PruneReport::new(self.variant.name(), saliency, layout, &masks)?;
        report.ocp_log = ocp_log;
        report.icp_logs = icp_logs;
        report.identity_fallback = fallback;
        Ok(GyroOutcome {
            permutation,
            masks,
            report,
        })
    }

    /// Vector pruning under `sigma_o`, per-tile ICP, then N:M pruning.
    fn finish(
        &self,
        saliency: &SaliencyMatrix,
        sigma_o: Vec<usize>,
    ) -> Result<(GyroPermutation, MaskPair, Vec<Vec<f64>>)> {
        let layout = &self.layout;
        let vectors = vector_prune(saliency, layout, &sigma_o)?;
        let tiles: Vec<TilePermutation> = (0..layout.tiles())
            .into_par_iter()
            .map(|t| {
                let rows = &sigma_o[layout.tile_range(t)];
                let order = vectors.survivors(t);
                match self.variant {
                    Variant::V2ChannelSwapIcp => greedy_swap_tile(saliency, rows, order, layout),
                    Variant::Full | Variant::V1NoSamplingKmeansAll => {
                        let mut rng = ChaCha8Rng::seed_from_u64(layout.seed());
                        rng.set_stream(t as u64 + 1);
                        icp_tile(saliency, rows, order, layout, &mut rng)
                    }
                }
            })
            .collect::<Result<_>>()?;
        let (sigma_i, logs) = tiles.into_iter().map(|t| (t.order, t.log)).unzip();
        let permutation = GyroPermutation { sigma_o, sigma_i };
        let elements = nm_prune(saliency, &vectors, layout, &permutation)?;
        let masks = MaskPair::new(
            layout.tiles(),
            layout.rows(),
            layout.cols(),
            vectors.as_slice().to_vec(),
            elements,
        )?;
        Ok((permutation, masks, logs))
    }
}
