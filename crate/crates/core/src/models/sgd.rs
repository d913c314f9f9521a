//! Plain mini-batch SGD, the non-private baseline optimizer. The DP trainer
//! reuses the batching and update helpers so the two agree exactly when
//! noise and clipping are disabled.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::Network;
use crate::data::Dataset;
use crate::rng::{derive_seed, seeded, streams, SeededRng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SgdConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    pub seed: u64,
}

impl SgdConfig {
    pub(crate) fn batch_rng(&self) -> SeededRng {
        seeded(derive_seed(self.seed, streams::BATCHES))
    }
}

/// Shuffles `0..n` and cuts it into consecutive batches of `batch_size`
/// (the last one may be shorter).
pub(crate) fn epoch_batches(rng: &mut SeededRng, n: usize, batch_size: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// `θ ← θ − η (g + λ w)`, with the L2 term on weights only.
pub(crate) fn apply_update(net: &mut Network, mask: &[bool], step: &[f64], lr: f64, l2: f64) {
    for ((theta, g), &is_weight) in net.params_mut().iter_mut().zip(step).zip(mask) {
        let decay = if is_weight && l2 > 0.0 { l2 * *theta } else { 0.0 };
        *theta -= lr * (g + decay);
    }
}

pub(crate) fn train_sgd(net: &mut Network, data: &Dataset, cfg: &SgdConfig) -> Result<()> {
    let mut rng = cfg.batch_rng();
    let mask = net.weight_mask();
    let p = net.params().len();
    let mut grad = vec![0.0; p];
    let mut sum = vec![0.0; p];
    let mut scratch = net.scratch();
    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        for batch in epoch_batches(&mut rng, data.len(), cfg.batch_size) {
            sum.iter_mut().for_each(|v| *v = 0.0);
            for &i in &batch {
                epoch_loss += net.loss_and_gradient(data.row(i), data.label(i), &mut grad, &mut scratch);
                for (s, g) in sum.iter_mut().zip(&grad) {
                    *s += g;
                }
            }
            let scale = batch.len() as f64;
            for s in &mut sum {
                *s /= scale;
            }
            apply_update(net, &mask, &sum, cfg.learning_rate, cfg.l2);
        }
        if !epoch_loss.is_finite() || net.params().iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;
    use crate::models::{train, MlpParams, ModelSpec};

    #[test]
    fn batches_cover_every_row_once() {
        let mut rng = seeded(1);
        let batches = epoch_batches(&mut rng, 23, 5);
        assert_eq!(batches.len(), 5);
        assert_eq!(batches[4].len(), 3);
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let ds = synth_blobs(3, 30, 4, 0.2, 0).unwrap();
        let spec = ModelSpec::Mlp(MlpParams {
            hidden: vec![16, 16],
            learning_rate: 1e200,
            epochs: 5,
            ..Default::default()
        });
        assert!(matches!(train(&spec, &ds, None), Err(Error::Diverged { .. })));
    }
}
