//! Mixed norms, positive part and label-subset enumeration.
//!
//! A [`GroupedVector`] is indexed by `(group, position)` pairs stored
//! group-major: entry `(i, j)` lives at `i * group_size + j`. In this crate the
//! groups are feature patterns and the positions are labels.

use crate::error::{LpcError, Result};

/// Largest label count for which all nonempty label subsets are enumerated.
pub const MAX_SUBSET_LABELS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupedVector {
    values: Vec<f64>,
    group_size: usize,
}

impl GroupedVector {
    pub fn new(values: Vec<f64>, group_size: usize) -> Result<Self> {
        if group_size == 0 {
            return Err(LpcError::InvalidArgument("group_size must be >= 1".into()));
        }
        if !values.len().is_multiple_of(group_size) {
            return Err(LpcError::InvalidArgument(format!(
                "length {} is not a multiple of group_size {}",
                values.len(),
                group_size
            )));
        }
        Ok(Self { values, group_size })
    }

    pub fn from_groups(groups: &[Vec<f64>]) -> Result<Self> {
        let group_size = groups.first().map_or(1, Vec::len);
        if groups.iter().any(|g| g.len() != group_size) {
            return Err(LpcError::InvalidArgument("ragged groups".into()));
        }
        Self::new(groups.concat(), group_size)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn group_count(&self) -> usize {
        self.values.len() / self.group_size
    }

    pub fn groups(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.group_size)
    }
}

pub fn positive_part(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.max(0.0)).collect()
}

/// `max_i sum_j |v_(i,j)|`
pub fn mixed_norm_1_inf(v: &GroupedVector) -> f64 {
    v.groups()
        .map(|g| g.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `sum_i max_j |v_(i,j)|`
pub fn mixed_norm_inf_1(v: &GroupedVector) -> f64 {
    v.groups()
        .map(|g| g.iter().fold(0.0_f64, |m, x| m.max(x.abs())))
        .sum()
}

/// All nonempty subsets of `{0, .., num_labels - 1}`, ordered by bitmask.
pub fn nonempty_label_subsets(num_labels: usize) -> Result<Vec<Vec<usize>>> {
    if num_labels == 0 || num_labels > MAX_SUBSET_LABELS {
        return Err(LpcError::InvalidArgument(format!(
            "num_labels must be in 1..={MAX_SUBSET_LABELS}, got {num_labels}"
        )));
    }
    Ok((1u32..(1u32 << num_labels))
        .map(|mask| {
            (0..num_labels)
                .filter(|&y| mask & (1 << y) != 0)
                .collect()
        })
        .collect())
}
