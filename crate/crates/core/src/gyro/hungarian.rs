//! Minimum-cost perfect matching (Hungarian algorithm, O(n^3)).
//!
//! Among all optimal matchings the lexicographically smallest column vector
//! is returned. After the primal-dual solve, every optimal matching lives on
//! the tight edges of the final dual, so the lexicographic choice is made on
//! that subgraph with alternating-cycle exchanges, which keeps the cost
//! optimal.

use std::collections::VecDeque;

use crate::error::{HinmError, Result};

/// Square matrix of finite, non-negative assignment costs. Entry `(i, j)` is
/// the cost of giving candidate `j` to partition `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl CostMatrix {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(HinmError::Cost(format!(
                "{} entries do not form a {n}x{n} matrix",
                entries.len()
            )));
        }
        if let Some(bad) = entries.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(HinmError::Cost(format!("entry {bad} is not a finite non-negative cost")));
        }
        Ok(Self { n, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(HinmError::Cost("cost matrix must be square".into()));
        }
        Self::new(n, rows.concat())
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `columns[i]` is the candidate assigned to partition `i`.
    pub columns: Vec<usize>,
    pub total: f64,
}

impl Assignment {
    pub fn is_identity(&self) -> bool {
        self.columns.iter().enumerate().all(|(i, &j)| i == j)
    }
}

pub fn hungarian(costs: &CostMatrix) -> Assignment {
    let n = costs.n;
    if n == 0 {
        return Assignment {
            columns: Vec::new(),
            total: 0.0,
        };
    }
    let (mut col_of_row, u, v) = solve(costs);

    let scale = costs.entries.iter().fold(0.0f64, |a, &c| a.max(c));
    let eps = 1e-10 * scale * n as f64;
    let tight = |i: usize, j: usize| costs.get(i, j) - u[i + 1] - v[j + 1] <= eps;

    let mut row_of_col = vec![0; n];
    for (i, &j) in col_of_row.iter().enumerate() {
        row_of_col[j] = i;
    }
    let mut fixed_row = vec![false; n];
    let mut fixed_col = vec![false; n];
    for i in 0..n {
        for j in 0..n {
            if fixed_col[j] || !tight(i, j) {
                continue;
            }
            if col_of_row[i] == j {
                break;
            }
            // Row i takes column j; column j's owner must reach i's old column.
            let start = row_of_col[j];
            let target = col_of_row[i];
            if let Some(path) = alternating_path(n, start, target, j, i, &fixed_row, &fixed_col, &col_of_row, &row_of_col, &tight) {
                col_of_row[i] = j;
                row_of_col[j] = i;
                for (r, c) in path {
                    col_of_row[r] = c;
                    row_of_col[c] = r;
                }
                break;
            }
        }
        fixed_row[i] = true;
        fixed_col[col_of_row[i]] = true;
    }

    let total = col_of_row.iter().enumerate().map(|(i, &j)| costs.get(i, j)).sum();
    Assignment {
        columns: col_of_row,
        total,
    }
}

/// BFS over unfixed rows for a path `start -> c1 -> row(c1) -> ... -> target`
/// along tight edges. Returns the new `(row, column)` pairs.
#[allow(clippy::too_many_arguments)]
fn alternating_path(
    n: usize,
    start: usize,
    target: usize,
    taken: usize,
    mover: usize,
    fixed_row: &[bool],
    fixed_col: &[bool],
    col_of_row: &[usize],
    row_of_col: &[usize],
    tight: &impl Fn(usize, usize) -> bool,
) -> Option<Vec<(usize, usize)>> {
    let mut prev_row = vec![usize::MAX; n];
    let mut seen_row = vec![false; n];
    let mut queue = VecDeque::from([start]);
    seen_row[start] = true;
    while let Some(r) = queue.pop_front() {
        for c in 0..n {
            if fixed_col[c] || c == taken || c == col_of_row[r] || prev_row[c] != usize::MAX || !tight(r, c) {
                continue;
            }
            prev_row[c] = r;
            if c == target {
                let mut path = Vec::new();
                let mut col = c;
                loop {
                    let row = prev_row[col];
                    path.push((row, col));
                    if row == start {
                        return Some(path);
                    }
                    col = col_of_row[row];
                }
            }
            let next = row_of_col[c];
            if next != mover && !fixed_row[next] && !seen_row[next] {
                seen_row[next] = true;
                queue.push_back(next);
            }
        }
    }
    None
}

/// Shortest augmenting path primal-dual solve. Returns the matching and the
/// 1-based row/column potentials.
fn solve(costs: &CostMatrix) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = costs.n;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = costs.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut col_of_row = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            col_of_row[p[j] - 1] = j - 1;
        }
    }
    (col_of_row, u, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn solve_rows(rows: &[Vec<f64>]) -> Assignment {
        hungarian(&CostMatrix::from_rows(rows).unwrap())
    }

    #[test]
    fn small_examples() {
        let a = solve_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert_eq!(a.columns, vec![0, 1]);
        assert_eq!(a.total, 2.0);
        let a = solve_rows(&[vec![4.0]]);
        assert_eq!((a.columns, a.total), (vec![0], 4.0));
        let a = solve_rows(&[vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]]);
        assert_eq!(a.total, 5.0);
        assert_eq!(a.columns, vec![1, 0, 2]);
    }

    #[test]
    fn ties_resolve_to_identity() {
        let a = solve_rows(&[vec![3.0; 4], vec![3.0; 4], vec![3.0; 4], vec![3.0; 4]]);
        assert!(a.is_identity());
        let a = solve_rows(&[vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]]);
        assert!(a.is_identity());
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(CostMatrix::from_rows(&[vec![1.0, 2.0]]).is_err());
        assert!(CostMatrix::from_rows(&[vec![-1.0]]).is_err());
        assert!(CostMatrix::from_rows(&[vec![f64::NAN]]).is_err());
        assert!(hungarian(&CostMatrix::new(0, vec![]).unwrap()).columns.is_empty());
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for first in 0..n {
            for rest in permutations(n - 1) {
                let mut p = vec![first];
                p.extend(rest.into_iter().map(|x| if x >= first { x + 1 } else { x }));
                out.push(p);
            }
        }
        out
    }

    proptest! {
        #[test]
        fn matches_lexicographic_brute_force(
            n in 1usize..=6,
            seed in proptest::collection::vec(0u8..6, 36),
        ) {
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..n).map(|j| f64::from(seed[i * 6 + j])).collect())
                .collect();
            let a = solve_rows(&rows);
            // permutations() enumerates in lexicographic order.
            let mut best: Option<(f64, Vec<usize>)> = None;
            for p in permutations(n) {
                let cost: f64 = p.iter().enumerate().map(|(i, &j)| rows[i][j]).sum();
                if best.as_ref().is_none_or(|(b, _)| cost < *b) {
                    best = Some((cost, p));
                }
            }
            let (cost, perm) = best.unwrap();
            prop_assert_eq!(a.total, cost);
            prop_assert_eq!(a.columns, perm);
        }
    }
}
