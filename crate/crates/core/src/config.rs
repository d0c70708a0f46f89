//! Pruning configuration and its validated, shape-bound form.

use serde::{Deserialize, Serialize};

use crate::error::{HinmError, Result};

const DEFAULT_OCP_ITERS: usize = 20;
const DEFAULT_ICP_ITERS: usize = 50;
const DEFAULT_ICP_PATIENCE: usize = 10;

/// Tie-breaking policy for every top-k selection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    LowestIndex,
}

/// User-facing HiNM configuration, deserialized from JSON.
///
/// `tile_rows` and `ocp_sample_schedule` may be omitted; they resolve to the
/// vector size and to the decaying default schedule respectively.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HiNMConfig {
    pub vector_size: usize,
    pub nm_keep: usize,
    pub nm_group: usize,
    pub vector_sparsity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tile_rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ocp_sample_schedule: Option<Vec<usize>>,
    #[serde(default = "default_ocp_iters")]
    pub ocp_max_iters: usize,
    #[serde(default = "default_icp_iters")]
    pub icp_max_iters: usize,
    /// Consecutive non-improving ICP iterations tolerated before a tile stops.
    #[serde(default = "default_icp_patience")]
    pub icp_patience: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tie_break: TieBreak,
}

fn default_ocp_iters() -> usize {
    DEFAULT_OCP_ITERS
}

fn default_icp_iters() -> usize {
    DEFAULT_ICP_ITERS
}

fn default_icp_patience() -> usize {
    DEFAULT_ICP_PATIENCE
}

impl Default for HiNMConfig {
    fn default() -> Self {
        Self::new(4, 2, 4, 0.5)
    }
}

impl HiNMConfig {
    pub fn new(vector_size: usize, nm_keep: usize, nm_group: usize, vector_sparsity: f64) -> Self {
        Self {
            vector_size,
            nm_keep,
            nm_group,
            vector_sparsity,
            tile_rows: None,
            ocp_sample_schedule: None,
            ocp_max_iters: DEFAULT_OCP_ITERS,
            icp_max_iters: DEFAULT_ICP_ITERS,
            icp_patience: DEFAULT_ICP_PATIENCE,
            seed: 0,
            tie_break: TieBreak::LowestIndex,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_iterations(mut self, ocp_max_iters: usize, icp_max_iters: usize) -> Self {
        self.ocp_max_iters = ocp_max_iters;
        self.icp_max_iters = icp_max_iters;
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HinmError::Value(format!("config: {e}")))
    }

    /// Copy with `tile_rows` and the OCP schedule filled in explicitly.
    pub fn resolved(&self) -> Self {
        let mut cfg = self.clone();
        cfg.tile_rows.get_or_insert(self.vector_size);
        if cfg.ocp_sample_schedule.is_none() {
            cfg.ocp_sample_schedule = Some(default_schedule(self.vector_size, self.ocp_max_iters));
        }
        cfg
    }
}

/// `k_i = max(1, round(V/2 * 0.8^i))` for each OCP iteration.
pub fn default_schedule(vector_size: usize, iterations: usize) -> Vec<usize> {
    (0..iterations)
        .map(|i| {
            let k = (vector_size as f64 / 2.0 * 0.8f64.powi(i as i32)).round() as usize;
            k.clamp(1, vector_size.max(1))
        })
        .collect()
}

/// A configuration checked against a concrete `rows x cols` weight shape,
/// with every derived count precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    config: HiNMConfig,
    rows: usize,
    cols: usize,
    vectors_per_tile: usize,
}

/// Validates `cfg` for a weight matrix of shape `(rows, cols)`.
pub fn validate_config(cfg: &HiNMConfig, shape: (usize, usize)) -> Result<Layout> {
    let (rows, cols) = shape;
    let v = cfg.vector_size;
    let (n, m) = (cfg.nm_keep, cfg.nm_group);

    if v == 0 {
        return Err(HinmError::Value("vector_size must be at least 1".into()));
    }
    if n == 0 || m == 0 {
        return Err(HinmError::Value("nm_keep and nm_group must be at least 1".into()));
    }
    // 1:1 is the only N == M pattern accepted: it switches N:M pruning off.
    if n > m || (n == m && m != 1) {
        return Err(HinmError::Value(format!(
            "nm_keep ({n}) must be smaller than nm_group ({m})"
        )));
    }
    let sv = cfg.vector_sparsity;
    if !(sv.is_finite() && (0.0..1.0).contains(&sv)) {
        return Err(HinmError::Value(format!("vector_sparsity {sv} must lie in [0, 1)")));
    }
    if let Some(t) = cfg.tile_rows {
        if t != v {
            return Err(HinmError::Value(format!(
                "tile_rows ({t}) must equal vector_size ({v})"
            )));
        }
    }
    if rows == 0 || cols == 0 {
        return Err(HinmError::Dimension(format!("empty shape {rows}x{cols}")));
    }
    if rows % v != 0 {
        return Err(HinmError::Dimension(format!(
            "{rows} output channels are not divisible by vector_size {v}"
        )));
    }

    let kept = cols as f64 * (1.0 - sv);
    let vectors_per_tile = kept.round();
    if (kept - vectors_per_tile).abs() > 1e-9 * cols as f64 || vectors_per_tile < 1.0 {
        return Err(HinmError::Budget(format!(
            "{cols} columns at vector sparsity {sv} do not leave a whole number of vectors per tile"
        )));
    }
    let vectors_per_tile = vectors_per_tile as usize;
    if !vectors_per_tile.is_multiple_of(m) {
        return Err(HinmError::Budget(format!(
            "{vectors_per_tile} surviving vectors per tile is not a multiple of nm_group {m}"
        )));
    }

    let config = cfg.resolved();
    let schedule = config.ocp_sample_schedule.as_deref().unwrap_or_default();
    if config.ocp_max_iters > 0 && schedule.is_empty() {
        return Err(HinmError::Value("ocp_sample_schedule is empty".into()));
    }
    if let Some(k) = schedule.iter().find(|&&k| k == 0 || k > v) {
        return Err(HinmError::Value(format!(
            "schedule entry {k} must lie in [1, {v}]"
        )));
    }
    if config.icp_patience == 0 {
        return Err(HinmError::Value("icp_patience must be at least 1".into()));
    }

    Ok(Layout {
        config,
        rows,
        cols,
        vectors_per_tile,
    })
}

impl Layout {
    /// Fully resolved configuration.
    pub fn config(&self) -> &HiNMConfig {
        &self.config
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn vector_size(&self) -> usize {
        self.config.vector_size
    }

    pub fn nm_keep(&self) -> usize {
        self.config.nm_keep
    }

    pub fn nm_group(&self) -> usize {
        self.config.nm_group
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    /// Rows per tile; always the vector size.
    pub fn tile_rows(&self) -> usize {
        self.config.vector_size
    }

    /// Number of tiles `T`.
    pub fn tiles(&self) -> usize {
        self.rows / self.tile_rows()
    }

    /// Number of output-channel partitions `P_o`.
    pub fn output_partitions(&self) -> usize {
        self.rows / self.config.vector_size
    }

    /// Surviving column vectors per tile (`k_v`).
    pub fn vectors_per_tile(&self) -> usize {
        self.vectors_per_tile
    }

    /// N:M groups per tile row.
    pub fn groups_per_tile(&self) -> usize {
        self.vectors_per_tile / self.config.nm_group
    }

    /// Sample count for OCP iteration `iter`; the last entry repeats.
    pub fn ocp_samples(&self, iter: usize) -> usize {
        let schedule = self.config.ocp_sample_schedule.as_deref().unwrap_or(&[]);
        schedule
            .get(iter)
            .or(schedule.last())
            .copied()
            .unwrap_or(1)
    }

    pub fn ocp_max_iters(&self) -> usize {
        self.config.ocp_max_iters
    }

    pub fn icp_max_iters(&self) -> usize {
        self.config.icp_max_iters
    }

    pub fn icp_patience(&self) -> usize {
        self.config.icp_patience
    }

    /// Row range (in permuted order) covered by tile `t`.
    pub fn tile_range(&self, t: usize) -> std::ops::Range<usize> {
        let h = self.tile_rows();
        t * h..(t + 1) * h
    }

    /// Elements zeroed by vector pruning.
    pub fn vector_zero_count(&self) -> usize {
        self.rows * (self.cols - self.vectors_per_tile)
    }

    /// Elements zeroed by N:M pruning among surviving vectors.
    pub fn nm_zero_count(&self) -> usize {
        self.rows * self.groups_per_tile() * (self.nm_group() - self.nm_keep())
    }

    /// Elements kept after both pruning levels.
    pub fn kept_count(&self) -> usize {
        self.rows * self.groups_per_tile() * self.nm_keep()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_the_canonical_configuration() {
        let layout = validate_config(&HiNMConfig::new(4, 2, 4, 0.5), (16, 16)).unwrap();
        assert_eq!(layout.output_partitions(), 4);
        assert_eq!(layout.tiles(), 4);
        assert_eq!(layout.vectors_per_tile(), 8);
        assert_eq!(layout.groups_per_tile(), 2);
        assert_eq!(layout.config().tile_rows, Some(4));
    }

    #[test]
    fn rejects_indivisible_rows() {
        let err = validate_config(&HiNMConfig::new(4, 2, 4, 0.5), (10, 16)).unwrap_err();
        assert!(matches!(err, HinmError::Dimension(_)));
    }

    #[test]
    fn rejects_n_not_below_m() {
        let err = validate_config(&HiNMConfig::new(4, 4, 4, 0.5), (16, 16)).unwrap_err();
        assert!(matches!(err, HinmError::Value(_)));
        assert!(validate_config(&HiNMConfig::new(4, 3, 2, 0.5), (16, 16)).is_err());
    }

    #[test]
    fn one_to_one_switches_nm_off() {
        let layout = validate_config(&HiNMConfig::new(2, 1, 1, 0.5), (4, 2)).unwrap();
        assert_eq!(layout.vectors_per_tile(), 1);
        assert_eq!(layout.nm_zero_count(), 0);
    }

    #[test]
    fn rejects_sparsity_out_of_range() {
        for sv in [-0.1, 1.0, 1.5, f64::NAN] {
            let err = validate_config(&HiNMConfig::new(4, 2, 4, sv), (16, 16)).unwrap_err();
            assert!(matches!(err, HinmError::Value(_)), "{sv}");
        }
    }

    #[test]
    fn rejects_unsatisfiable_budgets() {
        // 16 * 0.75 = 12 vectors, fine; 16 * 0.625 = 10, not a multiple of 4.
        assert!(validate_config(&HiNMConfig::new(4, 2, 4, 0.25), (16, 16)).is_ok());
        let err = validate_config(&HiNMConfig::new(4, 2, 4, 0.375), (16, 16)).unwrap_err();
        assert!(matches!(err, HinmError::Budget(_)));
        // 10 * 0.55 = 4.5 is not whole.
        let err = validate_config(&HiNMConfig::new(2, 1, 2, 0.55), (4, 10)).unwrap_err();
        assert!(matches!(err, HinmError::Budget(_)));
    }

    #[test]
    fn tile_rows_must_match_vector_size() {
        let mut cfg = HiNMConfig::new(4, 2, 4, 0.5);
        cfg.tile_rows = Some(8);
        assert!(matches!(
            validate_config(&cfg, (16, 16)).unwrap_err(),
            HinmError::Value(_)
        ));
    }

    #[test]
    fn schedule_entries_are_bounded() {
        let mut cfg = HiNMConfig::new(4, 2, 4, 0.5);
        cfg.ocp_sample_schedule = Some(vec![2, 5]);
        assert!(validate_config(&cfg, (16, 16)).is_err());
        cfg.ocp_sample_schedule = Some(vec![0]);
        assert!(validate_config(&cfg, (16, 16)).is_err());
        cfg.ocp_sample_schedule = Some(vec![4, 1]);
        let layout = validate_config(&cfg, (16, 16)).unwrap();
        assert_eq!(layout.ocp_samples(0), 4);
        assert_eq!(layout.ocp_samples(7), 1);
    }

    #[test]
    fn default_schedule_decays() {
        assert_eq!(default_schedule(4, 5), vec![2, 2, 1, 1, 1]);
        assert_eq!(default_schedule(8, 6), vec![4, 3, 3, 2, 2, 1]);
        assert_eq!(default_schedule(1, 3), vec![1, 1, 1]);
        assert!(default_schedule(16, 20).iter().all(|&k| (1..=16).contains(&k)));
    }

    #[test]
    fn json_uses_field_names_as_keys() {
        let cfg = HiNMConfig::from_json(
            r#"{"vector_size": 8, "nm_keep": 2, "nm_group": 4, "vector_sparsity": 0.5,
                "tile_rows": 8, "ocp_sample_schedule": [4, 2], "ocp_max_iters": 2,
                "icp_max_iters": 5, "seed": 7, "tie_break": "lowest_index"}"#,
        )
        .unwrap();
        assert_eq!(cfg.vector_size, 8);
        assert_eq!(cfg.ocp_sample_schedule, Some(vec![4, 2]));
        assert_eq!(cfg.seed, 7);
        assert!(HiNMConfig::from_json(r#"{"vector_size": 8}"#).is_err());
        assert!(HiNMConfig::from_json(
            r#"{"vector_size": 8, "nm_keep": 2, "nm_group": 4, "vector_sparsity": 0.5, "bogus": 1}"#
        )
        .is_err());
    }
}
