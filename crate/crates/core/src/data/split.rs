use alloc::format;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::invalid;
use crate::rng::seeded;
use crate::{Error, Result};

/// How a dataset is divided into the target's training set and the balanced
/// member / non-member evaluation sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub target_train_fraction: f64,
    pub eval_in_count: usize,
    pub eval_out_count: usize,
}

/// Result of [`split_in_out`]. Index vectors refer to rows of the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub eval_in: Dataset,
    pub eval_out: Dataset,
    /// Rows outside the training set that were not drawn for `eval_out`.
    pub holdout: Option<Dataset>,
    pub train_indices: Vec<usize>,
    pub eval_in_indices: Vec<usize>,
    pub eval_out_indices: Vec<usize>,
    pub holdout_indices: Vec<usize>,
}

impl Split {
    /// Every row not in the training set (`eval_out` followed by `holdout`).
    pub fn non_members(&self) -> Result<Dataset> {
        match &self.holdout {
            Some(h) => self.eval_out.concat(h),
            None => Ok(self.eval_out.clone()),
        }
    }
}

/// Shuffles rows with `plan.seed`; the first `round(fraction * n)` become the
/// training set, `eval_in` is drawn from the training set and `eval_out` from
/// the remaining rows.
pub fn split_in_out(ds: &Dataset, plan: &SplitPlan) -> Result<Split> {
    let f = plan.target_train_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(invalid("target_train_fraction must be in (0,1)"));
    }
    if plan.eval_in_count != plan.eval_out_count {
        return Err(Error::InfeasibleSplit(format!(
            "eval_in_count {} != eval_out_count {}",
            plan.eval_in_count, plan.eval_out_count
        )));
    }
    if plan.eval_in_count == 0 {
        return Err(Error::InfeasibleSplit("evaluation sets must be non-empty".into()));
    }
    let n = ds.len();
    let n_train = libm::round(f * n as f64) as usize;
    let n_rest = n - n_train;
    if n_train < plan.eval_in_count || n_rest < plan.eval_out_count {
        return Err(Error::InfeasibleSplit(format!(
            "{n} rows give {n_train} train / {n_rest} other, need {} in / {} out",
            plan.eval_in_count, plan.eval_out_count
        )));
    }
    let mut rng = seeded(plan.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let (train_indices, rest) = order.split_at(n_train);
    let eval_in_indices: Vec<usize> = index::sample(&mut rng, n_train, plan.eval_in_count)
        .into_iter()
        .map(|j| train_indices[j])
        .collect();
    let eval_out_indices = rest[..plan.eval_out_count].to_vec();
    let holdout_indices = rest[plan.eval_out_count..].to_vec();
    Ok(Split {
        train: ds.subset(train_indices)?,
        eval_in: ds.subset(&eval_in_indices)?,
        eval_out: ds.subset(&eval_out_indices)?,
        holdout: if holdout_indices.is_empty() {
            None
        } else {
            Some(ds.subset(&holdout_indices)?)
        },
        train_indices: train_indices.to_vec(),
        eval_in_indices,
        eval_out_indices,
        holdout_indices,
    })
}
