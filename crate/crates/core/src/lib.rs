//! Hierarchical N:M (HiNM) sparsity: vector pruning of output-channel tiles
//! followed by N:M pruning of the survivors, with gyro-permutation of both
//! channel axes to maximise retained saliency.

pub mod arith;
pub mod config;
pub mod encoding;
pub mod error;
pub mod format;
pub mod gyro;
pub mod matrix;
pub mod model;
pub mod oracle;
pub mod pruner;
pub mod spmm;

pub use arith::{composed_sparsity, count_permutation_space, exact_sparsity};
pub use config::{validate_config, HiNMConfig, Layout};
pub use encoding::{decode, encode, HiNMEncoding};
pub use error::{ErrorClass, HinmError, Result};
pub use gyro::{ablation_mode, gyro_permute, gyro_permute_weights, prune_identity, GyroOutcome, Variant};
pub use matrix::{DenseMatrix, SaliencyMatrix};
pub use model::{GyroPermutation, MaskPair};
pub use oracle::{exhaustive_icp, exhaustive_ocp, oracle_gap, OracleReport};
pub use pruner::{apply_masks, magnitude_saliency, nm_prune, retained_saliency, vector_prune, PruneReport};
pub use spmm::{compose_layers, dense_matmul, hinm_spmm, tile_shuffle_check, LayerChain};
