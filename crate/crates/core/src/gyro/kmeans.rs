//! Balanced k-means: every cluster ends with exactly `cluster_size` points.
//!
//! Centroids are seeded with k-means++. Each assignment pass visits points
//! in decreasing order of their margin (distance to the second-nearest
//! centroid minus distance to the nearest) and gives each point the nearest
//! centroid that still has room. A pairwise swap pass then polishes the
//! within-cluster sum of squares. The best of a few restarts is kept.

use rand::Rng;

use crate::error::{HinmError, Result};

const RESTARTS: usize = 4;
const MAX_LLOYD_ITERS: usize = 50;
const MAX_SWAP_PASSES: usize = 100;

/// Clusters `points` into `num_clusters` groups of `cluster_size`. Returns
/// point indices per cluster, each ascending, clusters ordered by their
/// smallest member.
pub fn balanced_kmeans<R: Rng + ?Sized>(
    points: &[&[f64]],
    num_clusters: usize,
    cluster_size: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if num_clusters == 0 || cluster_size == 0 || points.len() != num_clusters * cluster_size {
        return Err(HinmError::Count(format!(
            "{} points cannot form {num_clusters} clusters of {cluster_size}",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(HinmError::Count("points have different dimensions".into()));
    }
    if num_clusters == 1 {
        return Ok(vec![(0..points.len()).collect()]);
    }
    if cluster_size == 1 {
        return Ok((0..points.len()).map(|i| vec![i]).collect());
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..RESTARTS {
        let mut labels = lloyd(points, num_clusters, cluster_size, rng);
        swap_refine(points, num_clusters, cluster_size, &mut labels);
        let cost = within_cluster_sse(points, &labels, num_clusters);
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, labels));
        }
    }
    let labels = best.expect("at least one restart").1;
    let mut clusters = vec![Vec::with_capacity(cluster_size); num_clusters];
    for (i, &l) in labels.iter().enumerate() {
        clusters[l].push(i);
    }
    clusters.sort_by_key(|c| c[0]);
    Ok(clusters)
}

/// Sum over clusters of squared distances to the cluster mean.
pub fn within_cluster_sse(points: &[&[f64]], labels: &[usize], num_clusters: usize) -> f64 {
    let centroids = centroids(points, labels, num_clusters);
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, &centroids[l]))
        .sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn centroids(points: &[&[f64]], labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p.iter()) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|x| *x /= c as f64);
        }
    }
    sums
}

fn kmeans_plus_plus<R: Rng + ?Sized>(points: &[&[f64]], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut chosen = vec![rng.gen_range(0..points.len())];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // All remaining points coincide with chosen centroids.
            let free: Vec<usize> = (0..points.len()).filter(|i| !chosen.contains(i)).collect();
            free[rng.gen_range(0..free.len())]
        };
        chosen.push(next);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, points[next]));
        }
    }
    chosen.iter().map(|&i| points[i].to_vec()).collect()
}

fn lloyd<R: Rng + ?Sized>(
    points: &[&[f64]],
    k: usize,
    size: usize,
    rng: &mut R,
) -> Vec<usize> {
    let mut centers = kmeans_plus_plus(points, k, rng);
    let mut labels = vec![usize::MAX; points.len()];
    for _ in 0..MAX_LLOYD_ITERS {
        let next = balanced_assign(points, &centers, size);
        if next == labels {
            break;
        }
        labels = next;
        centers = centroids(points, &labels, k);
    }
    labels
}

fn balanced_assign(points: &[&[f64]], centers: &[Vec<f64>], size: usize) -> Vec<usize> {
    let dist: Vec<Vec<f64>> = points
        .iter()
        .map(|p| centers.iter().map(|c| sq_dist(p, c)).collect())
        .collect();
    let margin = |d: &[f64]| {
        let (mut first, mut second) = (f64::INFINITY, f64::INFINITY);
        for &x in d {
            if x < first {
                second = first;
                first = x;
            } else if x < second {
                second = x;
            }
        }
        second - first
    };
    let mut order: Vec<usize> = (0..points.len()).collect();
    let margins: Vec<f64> = dist.iter().map(|d| margin(d)).collect();
    order.sort_by(|&a, &b| margins[b].total_cmp(&margins[a]).then(a.cmp(&b)));

    let mut room = vec![size; centers.len()];
    let mut labels = vec![0; points.len()];
    for p in order {
        let best = (0..centers.len())
            .filter(|&c| room[c] > 0)
            .min_by(|&a, &b| dist[p][a].total_cmp(&dist[p][b]).then(a.cmp(&b)))
            .expect("total capacity equals the number of points");
        room[best] -= 1;
        labels[p] = best;
    }
    labels
}

/// First-improvement pairwise swaps between clusters; sizes are preserved.
fn swap_refine(points: &[&[f64]], k: usize, size: usize, labels: &mut [usize]) {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    for (p, &l) in points.iter().zip(labels.iter()) {
        for (s, x) in sums[l].iter_mut().zip(p.iter()) {
            *s += x;
        }
    }
    let s = size as f64;
    for _ in 0..MAX_SWAP_PASSES {
        let mut improved = false;
        for a in 0..points.len() {
            for b in a + 1..points.len() {
                let (la, lb) = (labels[a], labels[b]);
                if la == lb {
                    continue;
                }
                // SSE change of exchanging a (in A) and b (in B):
                // -2 (c_A - c_B).(b - a) - 2 |b - a|^2 / s
                let mut dot = 0.0;
                let mut d2 = 0.0;
                for i in 0..dim {
                    let d = points[b][i] - points[a][i];
                    dot += (sums[la][i] - sums[lb][i]) / s * d;
                    d2 += d * d;
                }
                let delta = -2.0 * dot + 2.0 * d2 / s;
                if delta < -1e-12 * (1.0 + d2) {
                    for i in 0..dim {
                        let d = points[b][i] - points[a][i];
                        sums[la][i] += d;
                        sums[lb][i] -= d;
                    }
                    labels.swap(a, b);
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cluster(points: &[Vec<f64>], k: usize, size: usize, seed: u64) -> Vec<Vec<usize>> {
        let refs: Vec<&[f64]> = points.iter().map(Vec::as_slice).collect();
        balanced_kmeans(&refs, k, size, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn separates_obvious_groups() {
        let pts = vec![vec![10.0], vec![0.0], vec![10.1], vec![0.1]];
        assert_eq!(cluster(&pts, 2, 2, 1), vec![vec![0, 2], vec![1, 3]]);
    }

    #[test]
    fn single_cluster_takes_everything() {
        let pts = vec![vec![1.0], vec![5.0], vec![3.0]];
        assert_eq!(cluster(&pts, 1, 3, 0), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn balance_holds_on_skewed_data() {
        // Seven points near zero, one far away: balance forces mixing.
        let mut pts: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64 * 0.01, 0.0]).collect();
        pts.push(vec![100.0, 100.0]);
        let clusters = cluster(&pts, 4, 2, 3);
        assert_eq!(clusters.len(), 4);
        assert!(clusters.iter().all(|c| c.len() == 2));
        let mut all: Vec<usize> = clusters.concat();
        all.sort_unstable();
        assert_eq!(all, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_wrong_counts() {
        let pts = [vec![0.0], vec![1.0], vec![2.0]];
        let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            balanced_kmeans(&refs, 2, 2, &mut rng),
            Err(HinmError::Count(_))
        ));
    }

    #[test]
    fn deterministic_under_seed() {
        let pts: Vec<Vec<f64>> = (0..12).map(|i| vec![((i * 7) % 5) as f64, (i % 3) as f64]).collect();
        assert_eq!(cluster(&pts, 3, 4, 9), cluster(&pts, 3, 4, 9));
    }

    #[test]
    fn identical_points_are_handled() {
        let pts = vec![vec![1.0, 1.0]; 6];
        let clusters = cluster(&pts, 3, 2, 5);
        assert!(clusters.iter().all(|c| c.len() == 2));
    }
}
