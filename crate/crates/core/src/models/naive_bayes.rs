use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::NbParams;
use crate::data::Dataset;
use crate::math::{exp, ln, log_sum_exp};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Gaussian naive Bayes with a variance floor. Classes absent from training
/// get probability zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct GaussianNb {
    log_priors: Vec<Option<f64>>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

impl GaussianNb {
    pub(crate) fn fit(data: &Dataset, params: &NbParams) -> Self {
        let (k, m) = (data.n_classes(), data.n_features());
        let counts = data.class_counts();
        let mut means = vec![vec![0.0; m]; k];
        for (i, row) in data.rows().enumerate() {
            for (acc, v) in means[data.label(i)].iter_mut().zip(row) {
                *acc += v;
            }
        }
        for (c, mean) in means.iter_mut().enumerate() {
            if counts[c] > 0 {
                mean.iter_mut().for_each(|v| *v /= counts[c] as f64);
            }
        }
        let mut variances = vec![vec![0.0; m]; k];
        for (i, row) in data.rows().enumerate() {
            let c = data.label(i);
            for j in 0..m {
                let d = row[j] - means[c][j];
                variances[c][j] += d * d;
            }
        }
        for (c, var) in variances.iter_mut().enumerate() {
            for v in var.iter_mut() {
                *v = if counts[c] > 0 { *v / counts[c] as f64 } else { 0.0 } + params.var_floor;
            }
        }
        let n = data.len() as f64;
        let log_priors = counts
            .iter()
            .map(|&c| (c > 0).then(|| ln(c as f64 / n)))
            .collect();
        Self {
            log_priors,
            means,
            variances,
        }
    }

    pub(crate) fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let scores: Vec<f64> = self
            .log_priors
            .iter()
            .enumerate()
            .map(|(c, prior)| match prior {
                None => f64::NEG_INFINITY,
                Some(lp) => {
                    let ll: f64 = x
                        .iter()
                        .zip(&self.means[c])
                        .zip(&self.variances[c])
                        .map(|((xv, mu), var)| -0.5 * (LN_2PI + ln(*var)) - (xv - mu) * (xv - mu) / (2.0 * var))
                        .sum();
                    lp + ll
                }
            })
            .collect();
        let norm = log_sum_exp(&scores);
        scores.iter().map(|s| exp(s - norm)).collect()
    }
}
