//! Partitions and the equal-count sampling phase.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HinmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Output channels grouped into column-vector partitions of size `V`.
    Output,
    /// Surviving column vectors of one tile grouped into N:M groups of `M`.
    Input,
}

/// A fixed-capacity group of channels (output axis) or column vectors
/// (input axis).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub axis: Axis,
    pub members: Vec<usize>,
    pub capacity: usize,
}

impl Partition {
    pub fn new(axis: Axis, members: Vec<usize>) -> Self {
        let capacity = members.len();
        Self {
            axis,
            members,
            capacity,
        }
    }
}

/// What sampling left behind in one partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledPartition {
    /// Members that stayed, in their original order.
    pub remainder: Vec<usize>,
    /// Positions inside the partition that were emptied, ascending.
    pub vacated: Vec<usize>,
    /// The removed members, aligned with `vacated`.
    pub samples: Vec<usize>,
}

impl SampledPartition {
    /// Refills the vacated slots with `incoming` (in the given order).
    pub fn refill(&self, incoming: &[usize]) -> Vec<usize> {
        let len = self.remainder.len() + self.vacated.len();
        let mut out = Vec::with_capacity(len);
        let (mut rem, mut inc) = (self.remainder.iter(), incoming.iter());
        let mut vac = self.vacated.iter().peekable();
        for pos in 0..len {
            if vac.peek() == Some(&&pos) {
                vac.next();
                out.push(*inc.next().expect("incoming fills every vacated slot"));
            } else {
                out.push(*rem.next().expect("remainder fills the other slots"));
            }
        }
        out
    }
}

/// Removes exactly `k` uniformly chosen members from every partition.
pub fn sample_channels<R: Rng + ?Sized>(
    partitions: &[Partition],
    k: usize,
    rng: &mut R,
) -> Result<Vec<SampledPartition>> {
    partitions
        .iter()
        .map(|p| {
            if p.members.len() != p.capacity {
                return Err(HinmError::Capacity(format!(
                    "partition holds {} members, capacity is {}",
                    p.members.len(),
                    p.capacity
                )));
            }
            if k == 0 || k > p.capacity {
                return Err(HinmError::Capacity(format!(
                    "cannot sample {k} from a partition of {}",
                    p.capacity
                )));
            }
            let mut vacated = index::sample(rng, p.capacity, k).into_vec();
            vacated.sort_unstable();
            let samples = vacated.iter().map(|&i| p.members[i]).collect();
            let remainder = p
                .members
                .iter()
                .enumerate()
                .filter(|(i, _)| vacated.binary_search(i).is_err())
                .map(|(_, &m)| m)
                .collect();
            Ok(SampledPartition {
                remainder,
                vacated,
                samples,
            })
        })
        .collect()
}
