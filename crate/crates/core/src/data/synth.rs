//! Synthetic datasets used as desk-scale stand-ins for image and
//! purchase-history data.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::invalid;
use crate::rng::{seeded, standard_normal};
use crate::Result;

/// Serializable description of a synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SynthSpec {
    Blobs {
        classes: usize,
        per_class: usize,
        features: usize,
        spread: f64,
    },
    Purchases {
        classes: usize,
        per_class: usize,
        features: usize,
        flip_prob: f64,
    },
}

impl SynthSpec {
    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        match *self {
            Self::Blobs { classes, per_class, features, spread } => synth_blobs(classes, per_class, features, spread, seed),
            Self::Purchases { classes, per_class, features, flip_prob } => {
                synth_purchases(classes, per_class, features, flip_prob, seed)
            }
        }
    }
}

/// Centers are drawn from this box so that moderate spreads stay mostly
/// inside `[0, 1]` before clamping.
const CENTER_LO: f64 = 0.15;
const CENTER_HI: f64 = 0.85;

/// `k` Gaussian clusters of `per_class` points in `m` dimensions.
///
/// Each class gets a center drawn uniformly from `[0.15, 0.85]^m`; centers
/// are redrawn until every pair differs by at least a separation margin on
/// some coordinate (the margin halves after repeated failures). Points are
/// `center + spread * N(0, I)` clamped to `[0, 1]`. Rows are class-major.
pub fn synth_blobs(k: usize, per_class: usize, m: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if k < 2 || per_class == 0 || m == 0 {
        return Err(invalid("synth_blobs needs k >= 2, per_class >= 1, m >= 1"));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(invalid("spread must be finite and non-negative"));
    }
    let mut rng = seeded(seed);
    let mut margin = 0.25;
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut failures = 0;
    while centers.len() < k {
        let c: Vec<f64> = (0..m).map(|_| rng.random_range(CENTER_LO..CENTER_HI)).collect();
        let separated = centers.iter().all(|o| {
            o.iter()
                .zip(&c)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
                >= margin
        });
        if separated {
            centers.push(c);
        } else {
            failures += 1;
            if failures % 64 == 0 {
                margin /= 2.0;
            }
        }
    }
    let mut features = Vec::with_capacity(k * per_class * m);
    let mut labels = Vec::with_capacity(k * per_class);
    for (class, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            for &c in center {
                let v = c + spread * standard_normal(&mut rng);
                features.push(v.clamp(0.0, 1.0));
            }
            labels.push(class);
        }
    }
    Dataset::from_flat(features, m, labels, k)
}

/// Binary purchase-history profiles.
///
/// Each of `k` classes gets a random binary prototype of length `m`
/// (redrawn on collision with an earlier prototype); every instance copies
/// its class prototype and flips each bit independently with probability
/// `flip_prob`.
pub fn synth_purchases(
    k: usize,
    per_class: usize,
    m: usize,
    flip_prob: f64,
    seed: u64,
) -> Result<Dataset> {
    if k < 2 || per_class == 0 || m == 0 {
        return Err(invalid("synth_purchases needs k >= 2, per_class >= 1, m >= 1"));
    }
    if !(0.0..0.5).contains(&flip_prob) {
        return Err(invalid("flip_prob must be in [0, 0.5)"));
    }
    if m < 64 && (k as u64) > (1u64 << m) {
        return Err(invalid("not enough distinct binary prototypes for k classes"));
    }
    let mut rng = seeded(seed);
    let mut prototypes: Vec<Vec<bool>> = Vec::with_capacity(k);
    while prototypes.len() < k {
        let p: Vec<bool> = (0..m).map(|_| rng.random_bool(0.5)).collect();
        if !prototypes.contains(&p) {
            prototypes.push(p);
        }
    }
    let mut features = Vec::with_capacity(k * per_class * m);
    let mut labels = Vec::with_capacity(k * per_class);
    for (class, proto) in prototypes.iter().enumerate() {
        for _ in 0..per_class {
            for &bit in proto {
                let flip = flip_prob > 0.0 && rng.random_bool(flip_prob);
                features.push(if bit ^ flip { 1.0 } else { 0.0 });
            }
            labels.push(class);
        }
    }
    Dataset::from_flat(features, m, labels, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{train, ModelSpec, TreeParams};

    #[test]
    fn blobs_are_deterministic_and_bounded() {
        let a = synth_blobs(3, 40, 4, 0.2, 11).unwrap();
        let b = synth_blobs(3, 40, 4, 0.2, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.is_normalized());
        assert_eq!(a.class_counts(), alloc::vec![40, 40, 40]);
        assert_ne!(a, synth_blobs(3, 40, 4, 0.2, 12).unwrap());
    }

    #[test]
    fn zero_spread_collapses_to_centers() {
        let ds = synth_blobs(4, 10, 3, 0.0, 5).unwrap();
        for class in 0..4 {
            let first = ds.row(class * 10);
            for i in 0..10 {
                assert_eq!(ds.row(class * 10 + i), first);
            }
        }
        assert_ne!(ds.row(0), ds.row(10));
    }

    #[test]
    fn well_separated_blobs_fit_a_stump() {
        for seed in 0..5 {
            let ds = synth_blobs(2, 100, 3, 0.01, seed).unwrap();
            let spec = ModelSpec::DecisionTree(TreeParams {
                max_depth: Some(1),
                min_leaf: 1,
            });
            let model = train(&spec, &ds, None).unwrap();
            assert_eq!(model.train_accuracy(), Some(1.0), "seed {seed}");
        }
    }

    #[test]
    fn purchases_without_flips_equal_prototypes() {
        let ds = synth_purchases(5, 20, 30, 0.0, 3).unwrap();
        let mut protos: Vec<&[f64]> = Vec::new();
        for class in 0..5 {
            let p = ds.row(class * 20);
            for i in 0..20 {
                assert_eq!(ds.row(class * 20 + i), p);
            }
            assert!(!protos.contains(&p));
            protos.push(p);
        }
        assert!(ds.features().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn purchase_flip_rate_matches_monte_carlo_mean() {
        // Hamming distance to the prototype is Binomial(m, p).
        let (m, p, per_class) = (50, 0.1, 2000);
        let clean = synth_purchases(2, per_class, m, 0.0, 9).unwrap();
        let noisy = synth_purchases(2, per_class, m, p, 9).unwrap();
        // Same seed draws the same prototypes before any flips.
        assert_eq!(clean.row(0).len(), m);
        let mut dists = Vec::new();
        for i in 0..noisy.len() {
            let proto = clean.row((i / per_class) * per_class);
            let d = noisy
                .row(i)
                .iter()
                .zip(proto)
                .filter(|(a, b)| a != b)
                .count() as f64;
            dists.push(d);
        }
        let n = dists.len() as f64;
        let mean = dists.iter().sum::<f64>() / n;
        let se = libm::sqrt(m as f64 * p * (1.0 - p) / n);
        assert!((mean - m as f64 * p).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(synth_blobs(1, 10, 2, 0.1, 0).is_err());
        assert!(synth_blobs(2, 0, 2, 0.1, 0).is_err());
        assert!(synth_purchases(2, 10, 4, 0.5, 0).is_err());
        assert!(synth_purchases(5, 10, 2, 0.1, 0).is_err());
    }
}
