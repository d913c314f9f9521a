use alloc::format;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::invalid;
use crate::math::floor;
use crate::rng::seeded;
use crate::{Error, Result};

/// Adds `Uniform[0, sigma]` noise to every feature cell, clamping at 1.
///
/// Labels are unchanged. The input must already be normalized.
pub fn inject_noise(ds: &Dataset, sigma: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&sigma) {
        return Err(invalid(format!("noise sigma {sigma} outside [0, 1]")));
    }
    if !ds.is_normalized() {
        return Err(Error::InvalidDataset("noise injection needs [0,1] features".into()));
    }
    if sigma == 0.0 {
        return Ok(ds.clone());
    }
    let mut rng = seeded(seed);
    let features = ds
        .features()
        .iter()
        .map(|&x| (x + rng.random_range(0.0..=sigma)).min(1.0))
        .collect();
    ds.with_features(features)
}

/// Downsampling knob for one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkewConfig {
    pub target_class: usize,
    /// Requested share of the target class in the output, in `(0, 1]`.
    pub target_fraction: f64,
    pub seed: u64,
}

impl SkewConfig {
    /// Target-class size `floor(f * R / (1 - f))` for `R` other instances.
    pub fn target_count(&self, others: usize) -> Result<usize> {
        let f = self.target_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(invalid("target_fraction must be in (0,1]"));
        }
        if f == 1.0 {
            return Err(Error::UnachievableSkew(
                "fraction 1 requires removing every other class".into(),
            ));
        }
        // The epsilon absorbs representation error in exact cases such as
        // f = 0.1, R = 900 (exactly 100).
        Ok(floor(f * others as f64 / (1.0 - f) + 1e-9) as usize)
    }
}

/// Downsamples `cfg.target_class` (uniformly, without replacement) so that it
/// makes up `cfg.target_fraction` of the result. Other classes are kept as-is;
/// the output order is shuffled.
pub fn apply_skew(ds: &Dataset, cfg: &SkewConfig) -> Result<Dataset> {
    if cfg.target_class >= ds.n_classes() {
        return Err(invalid(format!(
            "target class {} outside 0..{}",
            cfg.target_class,
            ds.n_classes()
        )));
    }
    let (target_idx, other_idx): (Vec<usize>, Vec<usize>) =
        (0..ds.len()).partition(|&i| ds.label(i) == cfg.target_class);
    let keep = cfg.target_count(other_idx.len())?;
    if keep > target_idx.len() {
        return Err(Error::UnachievableSkew(format!(
            "fraction {} needs {keep} instances of class {} but only {} exist",
            cfg.target_fraction,
            cfg.target_class,
            target_idx.len()
        )));
    }
    if keep == 0 {
        return Err(Error::UnachievableSkew(format!(
            "fraction {} leaves no instances of class {}",
            cfg.target_fraction, cfg.target_class
        )));
    }
    let mut rng = seeded(cfg.seed);
    let mut chosen: Vec<usize> = index::sample(&mut rng, target_idx.len(), keep)
        .into_iter()
        .map(|j| target_idx[j])
        .collect();
    chosen.extend_from_slice(&other_idx);
    chosen.shuffle(&mut rng);
    ds.subset(&chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;
    use alloc::vec;

    fn ten_by_hundred() -> Dataset {
        synth_blobs(10, 100, 2, 0.1, 4).unwrap()
    }

    #[test]
    fn zero_sigma_is_identity() {
        let ds = ten_by_hundred();
        assert_eq!(inject_noise(&ds, 0.0, 1).unwrap(), ds);
    }

    #[test]
    fn noise_stays_in_band() {
        let ds = ten_by_hundred();
        let sigma = 0.3;
        let noisy = inject_noise(&ds, sigma, 2).unwrap();
        assert_eq!(noisy.labels(), ds.labels());
        for (x, y) in ds.features().iter().zip(noisy.features()) {
            assert!(*y >= *x && *y <= (x + sigma).min(1.0));
        }
        assert_eq!(noisy, inject_noise(&ds, sigma, 2).unwrap());
    }

    #[test]
    fn noise_mean_shift_of_zero_column() {
        let ds = Dataset::from_flat(vec![0.0; 10_000], 1, vec![0; 10_000], 2).unwrap();
        let noisy = inject_noise(&ds, 1.0, 3).unwrap();
        let mean = noisy.features().iter().sum::<f64>() / 10_000.0;
        assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn noise_rejects_bad_sigma_and_unnormalized_input() {
        let ds = ten_by_hundred();
        assert!(inject_noise(&ds, 1.5, 0).is_err());
        assert!(inject_noise(&ds, -0.1, 0).is_err());
        let raw = Dataset::from_flat(vec![2.0, 3.0], 1, vec![0, 1], 2).unwrap();
        assert!(inject_noise(&raw, 0.1, 0).is_err());
    }

    #[test]
    fn skew_counts() {
        let cfg = |f| SkewConfig {
            target_class: 3,
            target_fraction: f,
            seed: 8,
        };
        assert_eq!(cfg(0.10).target_count(900).unwrap(), 100);
        assert_eq!(cfg(0.02).target_count(900).unwrap(), 18);
        assert_eq!(cfg(0.01).target_count(900).unwrap(), 9);

        let ds = ten_by_hundred();
        let balanced = apply_skew(&ds, &cfg(0.10)).unwrap();
        assert_eq!(balanced.class_counts(), vec![100; 10]);
        let skewed = apply_skew(&ds, &cfg(0.02)).unwrap();
        let counts = skewed.class_counts();
        assert_eq!(counts[3], 18);
        assert_eq!(counts.iter().sum::<usize>(), 918);
    }

    #[test]
    fn skew_keeps_other_classes_intact() {
        let ds = ten_by_hundred();
        let skewed = apply_skew(
            &ds,
            &SkewConfig {
                target_class: 0,
                target_fraction: 0.05,
                seed: 1,
            },
        )
        .unwrap();
        let mut orig: Vec<Vec<u64>> = (0..ds.len())
            .filter(|&i| ds.label(i) != 0)
            .map(|i| ds.row(i).iter().map(|v| v.to_bits()).collect())
            .collect();
        let mut kept: Vec<Vec<u64>> = (0..skewed.len())
            .filter(|&i| skewed.label(i) != 0)
            .map(|i| skewed.row(i).iter().map(|v| v.to_bits()).collect())
            .collect();
        orig.sort();
        kept.sort();
        assert_eq!(orig, kept);
        let frac = skewed.class_counts()[0] as f64 / skewed.len() as f64;
        assert!((frac - 0.05).abs() * skewed.len() as f64 <= 1.0);
    }

    #[test]
    fn skew_rejects_unachievable() {
        let ds = ten_by_hundred();
        let up = SkewConfig {
            target_class: 0,
            target_fraction: 0.5,
            seed: 0,
        };
        assert!(matches!(apply_skew(&ds, &up), Err(Error::UnachievableSkew(_))));
        let all = SkewConfig {
            target_fraction: 1.0,
            ..up
        };
        assert!(apply_skew(&ds, &all).is_err());
        let zero = SkewConfig {
            target_fraction: 0.0,
            ..up
        };
        assert!(apply_skew(&ds, &zero).is_err());
        let tiny = SkewConfig {
            target_fraction: 1e-4,
            ..up
        };
        assert!(apply_skew(&ds, &tiny).is_err());
    }
}
