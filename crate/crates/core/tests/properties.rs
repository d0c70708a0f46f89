use hinm::arith::{composed_sparsity, count_permutation_space, exact_sparsity};
use hinm::oracle::{exhaustive_ocp, oracle_gap, Oracle};
use hinm::pruner::{top_k_indices, vector_scores};
use hinm::spmm::{relative_error, shuffle_tiles, TileShuffle};
use hinm::{
    apply_masks, decode, dense_matmul, encode, gyro_permute, hinm_spmm, prune_identity,
    retained_saliency, validate_config, DenseMatrix, HiNMConfig, SaliencyMatrix,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
struct Instance {
    cfg: HiNMConfig,
    weights: DenseMatrix,
}

impl Instance {
    fn saliency(&self) -> SaliencyMatrix {
        hinm::magnitude_saliency(&self.weights)
    }
}

const PATTERNS: [(usize, usize); 5] = [(1, 1), (1, 2), (2, 4), (1, 4), (3, 4)];

/// Valid (config, weights) pairs with small integer-valued weights, so ties
/// are common.
fn instance() -> impl Strategy<Value = Instance> {
    (
        prop::sample::select(vec![1usize, 2, 4]),
        prop::sample::select(PATTERNS.to_vec()),
        1usize..=3,
        1usize..=4,
        any::<u64>(),
    )
        .prop_flat_map(|(v, (n, m), tiles, groups, seed)| {
            (1..=groups).prop_flat_map(move |kept_groups| {
                let (rows, cols) = (v * tiles, m * groups);
                let sv = 1.0 - kept_groups as f64 / groups as f64;
                prop::collection::vec(-8i32..=8, rows * cols).prop_map(move |vals| Instance {
                    cfg: HiNMConfig::new(v, n, m, sv).with_seed(seed).with_iterations(4, 8),
                    weights: DenseMatrix::new(rows, cols, vals.into_iter().map(|x| x as f32).collect()).unwrap(),
                })
            })
        })
}

fn tiny_gaussian_like(rows: usize, cols: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-4.0f32..4.0, rows * cols).prop_map(move |v| DenseMatrix::new(rows, cols, v).unwrap())
}

fn subsets(m: usize, n: usize) -> Vec<Vec<usize>> {
    (0u32..1 << m)
        .filter(|b| b.count_ones() as usize == n)
        .map(|b| (0..m).filter(|i| b & (1 << i) != 0).collect())
        .collect()
}

fn non_decreasing(log: &[f64]) -> bool {
    log.windows(2).all(|w| w[1] >= w[0])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn composed_sparsity_is_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0, m in 1usize..9, n1 in 1usize..9, n2 in 1usize..9) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (n1, n2) = (n1.min(m), n2.min(m));
        let (nlo, nhi) = (n1.min(n2), n1.max(n2));
        prop_assert!(composed_sparsity(lo, nlo, m) <= composed_sparsity(hi, nlo, m));
        prop_assert!(composed_sparsity(lo, nhi, m) <= composed_sparsity(lo, nlo, m));
    }

    #[test]
    fn single_partition_spaces_have_one_element(v in 1usize..8, m in 1usize..8) {
        prop_assert_eq!(count_permutation_space(v, m, v, m).unwrap(), 1u32.into());
    }

    #[test]
    fn zero_fraction_is_exact(inst in instance()) {
        let s = inst.saliency();
        let layout = validate_config(&inst.cfg, inst.weights.shape()).unwrap();
        let out = gyro_permute(&s, &inst.cfg).unwrap();
        let dense_ones = DenseMatrix::new(layout.rows(), layout.cols(), vec![1.0; layout.rows() * layout.cols()]).unwrap();
        let masked = apply_masks(&dense_ones, &out.masks).unwrap();
        let ratio = exact_sparsity(&layout);
        prop_assert_eq!(
            masked.count_zeros() as u64 * *ratio.denom(),
            (layout.rows() * layout.cols()) as u64 * *ratio.numer()
        );
        prop_assert_eq!(out.report.zero_count, masked.count_zeros());
    }

    #[test]
    fn nm_groups_keep_the_best_subset(inst in instance()) {
        let s = inst.saliency();
        let layout = validate_config(&inst.cfg, inst.weights.shape()).unwrap();
        let out = gyro_permute(&s, &inst.cfg).unwrap();
        let (n, m) = (layout.nm_keep(), layout.nm_group());
        let candidates = subsets(m, n);
        for t in 0..layout.tiles() {
            for &r in out.permutation.tile_rows(&layout, t) {
                for group in out.permutation.sigma_i[t].chunks(m) {
                    let kept: f64 = group.iter().filter(|&&c| out.masks.element_kept(r, c)).map(|&c| s.get(r, c)).sum();
                    let count = group.iter().filter(|&&c| out.masks.element_kept(r, c)).count();
                    let best = candidates
                        .iter()
                        .map(|sub| sub.iter().map(|&i| s.get(r, group[i])).sum::<f64>())
                        .fold(f64::NEG_INFINITY, f64::max);
                    prop_assert_eq!(count, n);
                    prop_assert_eq!(kept, best);
                }
            }
        }
    }

    #[test]
    fn vector_prune_keeps_top_scores(inst in instance()) {
        let s = inst.saliency();
        let layout = validate_config(&inst.cfg, inst.weights.shape()).unwrap();
        let out = gyro_permute(&s, &inst.cfg).unwrap();
        for t in 0..layout.tiles() {
            let scores = vector_scores(&s, out.permutation.tile_rows(&layout, t));
            let mut sorted = scores.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            let best: f64 = sorted[..layout.vectors_per_tile()].iter().sum();
            let survivors = out.masks.survivors(t);
            prop_assert_eq!(survivors.len(), layout.vectors_per_tile());
            let kept: f64 = survivors.iter().map(|&c| scores[c]).sum();
            prop_assert_eq!(kept, best);
            prop_assert_eq!(survivors, top_k_indices(&scores, layout.vectors_per_tile()));
        }
    }

    #[test]
    fn encode_decode_round_trip(inst in instance()) {
        let s = inst.saliency();
        let layout = validate_config(&inst.cfg, inst.weights.shape()).unwrap();
        let out = gyro_permute(&s, &inst.cfg).unwrap();
        let enc = encode(&inst.weights, &out.masks, &out.permutation, &layout).unwrap();
        let dense = decode(&enc, enc.shape()).unwrap().scatter_rows(&enc.sigma_o).unwrap();
        prop_assert_eq!(dense, apply_masks(&inst.weights, &out.masks).unwrap());
        let reloaded = hinm::HiNMEncoding::from_json(&enc.to_json().unwrap()).unwrap();
        prop_assert_eq!(reloaded, enc);
    }

    #[test]
    fn logs_are_monotone_and_permutations_valid(inst in instance()) {
        let s = inst.saliency();
        let layout = validate_config(&inst.cfg, inst.weights.shape()).unwrap();
        let out = gyro_permute(&s, &inst.cfg).unwrap();
        prop_assert!(non_decreasing(&out.report.ocp_log), "{:?}", out.report.ocp_log);
        for log in &out.report.icp_logs {
            prop_assert!(non_decreasing(log), "{:?}", log);
        }
        out.permutation.validate(&layout).unwrap();
        out.masks.validate(&layout, &out.permutation).unwrap();
    }

    #[test]
    fn gyro_dominates_no_perm(inst in instance()) {
        let s = inst.saliency();
        let gyro = gyro_permute(&s, &inst.cfg).unwrap();
        let plain = prune_identity(&s, &inst.cfg).unwrap();
        prop_assert!(gyro.report.retained_saliency >= plain.report.retained_saliency);
    }

    #[test]
    fn power_of_two_scaling_preserves_choices(inst in instance(), exp in -6i32..=6) {
        let s = inst.saliency();
        let scaled = s.scaled(2f64.powi(exp)).unwrap();
        let a = gyro_permute(&s, &inst.cfg).unwrap();
        let b = gyro_permute(&scaled, &inst.cfg).unwrap();
        prop_assert_eq!(a.permutation, b.permutation);
        prop_assert_eq!(a.masks, b.masks);
    }

    #[test]
    fn runs_are_deterministic(inst in instance()) {
        let s = inst.saliency();
        let a = gyro_permute(&s, &inst.cfg).unwrap();
        let b = gyro_permute(&s, &inst.cfg).unwrap();
        prop_assert_eq!(a.report.to_json().unwrap(), b.report.to_json().unwrap());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn spmm_matches_masked_dense(inst in instance(), x in tiny_gaussian_like(16, 3)) {
        let s = inst.saliency();
        let layout = validate_config(&inst.cfg, inst.weights.shape()).unwrap();
        let out = gyro_permute(&s, &inst.cfg).unwrap();
        let enc = encode(&inst.weights, &out.masks, &out.permutation, &layout).unwrap();
        let cols = layout.cols();
        let x = DenseMatrix::new(cols, 3, x.values()[..cols * 3].to_vec()).unwrap();
        let reference = dense_matmul(&apply_masks(&inst.weights, &out.masks).unwrap(), &x)
            .unwrap()
            .gather_rows(&enc.sigma_o)
            .unwrap();
        prop_assert!(relative_error(&hinm_spmm(&enc, &x).unwrap(), &reference) <= 1e-5);
    }

    #[test]
    fn shuffles_keep_the_element_set(inst in instance(), seed in any::<u64>()) {
        let s = inst.saliency();
        let layout = validate_config(&inst.cfg, inst.weights.shape()).unwrap();
        let out = gyro_permute(&s, &inst.cfg).unwrap();
        let enc = encode(&inst.weights, &out.masks, &out.permutation, &layout).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shuffles: Vec<TileShuffle> = (0..layout.tiles())
            .map(|_| TileShuffle::random(layout.groups_per_tile(), layout.nm_group(), &mut rng))
            .collect();
        let shuffled = shuffle_tiles(&enc, &shuffles).unwrap();
        shuffled.validate().unwrap();
        prop_assert_eq!(shuffled.kept_triples(), enc.kept_triples());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn oracle_bounds_gyro_and_no_perm(w in tiny_gaussian_like(8, 8), seed in any::<u64>()) {
        let s = hinm::magnitude_saliency(&w);
        let cfg = HiNMConfig::new(2, 1, 2, 0.5).with_seed(seed);
        let r = oracle_gap(&s, &cfg).unwrap();
        prop_assert!(r.oracle_retained >= r.gyro_retained);
        prop_assert!(r.gyro_retained >= r.no_perm_retained);
        prop_assert!((0.0..=1.0).contains(&r.gap));
        let direct = retained_saliency(&s, &gyro_permute(&s, &cfg).unwrap().masks).unwrap();
        prop_assert!((direct - r.gyro_retained).abs() <= 1e-9 * direct.max(1.0));
    }

    #[test]
    fn exhaustive_ocp_ignores_row_order(w in tiny_gaussian_like(6, 4), shift in 1usize..6) {
        let cfg = HiNMConfig::new(2, 1, 2, 0.5);
        let s = hinm::magnitude_saliency(&w);
        let order: Vec<usize> = (0..6).map(|i| (i + shift) % 6).collect();
        let relabelled = hinm::magnitude_saliency(&w.gather_rows(&order).unwrap());
        let a = exhaustive_ocp(&s, &cfg).unwrap().retained;
        let b = exhaustive_ocp(&relabelled, &cfg).unwrap().retained;
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn exhaustive_icp_ignores_survivor_order(row in prop::collection::vec(0.0f64..10.0, 8), seed in any::<u64>()) {
        let s = SaliencyMatrix::new(1, 8, row).unwrap();
        let oracle = Oracle::new(&HiNMConfig::new(1, 2, 4, 0.0), (1, 8)).unwrap();
        let mut survivors: Vec<usize> = (0..8).collect();
        let a = oracle.icp(&s, &[0], &survivors).unwrap().retained;
        use rand::seq::SliceRandom;
        survivors.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let b = oracle.icp(&s, &[0], &survivors).unwrap().retained;
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }
}
