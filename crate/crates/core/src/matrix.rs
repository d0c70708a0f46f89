//! Dense weight/activation matrices and saliency maps.
//!
//! Both are row-major. For weights, rows are output channels and columns are
//! input channels.

use crate::error::{HinmError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

impl DenseMatrix {
    /// Builds a matrix, rejecting empty shapes, length mismatches and
    /// non-finite values.
    pub fn new(rows: usize, cols: usize, values: Vec<f32>) -> Result<Self> {
        check_shape(rows, cols, values.len())?;
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(HinmError::NonFinite {
                row: pos / cols,
                col: pos % cols,
            });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix must be non-empty");
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(HinmError::Dimension("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
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

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f32) {
        self.values[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [f32] {
        &mut self.values[row * self.cols..(row + 1) * self.cols]
    }

    /// Gathers rows so that row `p` of the result is row `order[p]` of `self`.
    pub fn gather_rows(&self, order: &[usize]) -> Result<Self> {
        check_permutation(order, self.rows)?;
        let mut values = Vec::with_capacity(self.values.len());
        for &r in order {
            values.extend_from_slice(self.row(r));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            values,
        })
    }

    /// Inverse of [`gather_rows`](Self::gather_rows): row `p` of `self` lands
    /// at row `order[p]` of the result.
    pub fn scatter_rows(&self, order: &[usize]) -> Result<Self> {
        check_permutation(order, self.rows)?;
        let mut out = Self::zeros(self.rows, self.cols);
        for (p, &r) in order.iter().enumerate() {
            out.row_mut(r).copy_from_slice(self.row(p));
        }
        Ok(out)
    }

    pub fn count_zeros(&self) -> usize {
        self.values.iter().filter(|v| **v == 0.0).count()
    }
}

/// Per-element importance scores, shaped like the matrix they score.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMatrix {
    rows: usize,
    cols: usize,
    scores: Vec<f64>,
}

impl SaliencyMatrix {
    /// Builds a saliency map; every score must be finite and non-negative.
    pub fn new(rows: usize, cols: usize, scores: Vec<f64>) -> Result<Self> {
        check_shape(rows, cols, scores.len())?;
        for (pos, &s) in scores.iter().enumerate() {
            let (row, col) = (pos / cols, pos % cols);
            if !s.is_finite() {
                return Err(HinmError::NonFinite { row, col });
            }
            if s < 0.0 {
                return Err(HinmError::NegativeScore { row, col, value: s });
            }
        }
        Ok(Self { rows, cols, scores })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(HinmError::Dimension("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
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

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.scores[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.scores[row * self.cols..(row + 1) * self.cols]
    }

    pub fn total(&self) -> f64 {
        self.scores.iter().sum()
    }

    /// Multiplies every score by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(HinmError::Value(format!("scale factor {factor} must be positive")));
        }
        Self::new(
            self.rows,
            self.cols,
            self.scores.iter().map(|s| s * factor).collect(),
        )
    }

    pub fn expect_shape(&self, shape: (usize, usize)) -> Result<()> {
        if self.shape() != shape {
            return Err(HinmError::ShapeMismatch {
                expected: shape,
                actual: self.shape(),
            });
        }
        Ok(())
    }
}

fn check_shape(rows: usize, cols: usize, len: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(HinmError::Dimension(format!(
            "matrix must be non-empty, got {rows}x{cols}"
        )));
    }
    if rows.checked_mul(cols) != Some(len) {
        return Err(HinmError::Dimension(format!(
            "{len} values do not fill a {rows}x{cols} matrix"
        )));
    }
    Ok(())
}

/// Checks that `order` is a bijection on `0..len`.
pub fn check_permutation(order: &[usize], len: usize) -> Result<()> {
    if order.len() != len {
        return Err(HinmError::InvariantViolation(format!(
            "permutation has {} entries, expected {len}",
            order.len()
        )));
    }
    let mut seen = vec![false; len];
    for &i in order {
        if i >= len || std::mem::replace(&mut seen[i], true) {
            return Err(HinmError::InvariantViolation(format!(
                "index {i} is out of range or repeated"
            )));
        }
    }
    Ok(())
}

/// Returns `inv` with `inv[order[p]] = p`.
pub fn invert_permutation(order: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; order.len()];
    for (p, &i) in order.iter().enumerate() {
        inv[i] = p;
    }
    inv
}
