//! Closed-form counts: composed sparsity and the size of the permutation space.

use num_bigint::BigUint;
use num_rational::Ratio;

use crate::config::Layout;
use crate::error::{HinmError, Result};

/// Fraction of zeroed elements after vector pruning at `vector_sparsity`
/// followed by N:M pruning: `1 - (1 - s_v) * N / M`.
pub fn composed_sparsity(vector_sparsity: f64, nm_keep: usize, nm_group: usize) -> f64 {
    1.0 - (1.0 - vector_sparsity) * (nm_keep as f64 / nm_group as f64)
}

/// Exact zero fraction for a validated layout.
pub fn exact_sparsity(layout: &Layout) -> Ratio<u64> {
    let kept = Ratio::new(layout.vectors_per_tile() as u64, layout.cols() as u64)
        * Ratio::new(layout.nm_keep() as u64, layout.nm_group() as u64);
    Ratio::from_integer(1) - kept
}

fn factorial(n: usize) -> BigUint {
    (2..=n as u64).fold(BigUint::from(1u32), |acc, k| acc * k)
}

/// Number of balanced, unordered groupings of `items` into groups of `size`:
/// `items! / (size!^(items/size) * (items/size)!)`.
pub fn balanced_groupings(items: usize, size: usize) -> Result<BigUint> {
    if size == 0 || items == 0 || !items.is_multiple_of(size) {
        return Err(HinmError::Dimension(format!(
            "{items} items cannot be split into groups of {size}"
        )));
    }
    let groups = items / size;
    let denom = factorial(size).pow(groups as u32) * factorial(groups);
    Ok(factorial(items) / denom)
}

/// Size of the HiNM permutation space for an `m x n` matrix:
/// `m!/(V!^Po Po!) * T * n!/(M!^Pi Pi!)` with `Po = T = m/V` and `Pi = n/M`.
pub fn count_permutation_space(
    rows: usize,
    cols: usize,
    vector_size: usize,
    nm_group: usize,
) -> Result<BigUint> {
    let output = balanced_groupings(rows, vector_size)?;
    let input = balanced_groupings(cols, nm_group)?;
    let tiles = rows / vector_size;
    Ok(output * BigUint::from(tiles) * input)
}

/// Formats an integer with comma thousands separators.
pub fn group_digits(value: &BigUint) -> String {
    let digits = value.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}
