use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::KnnParams;
use crate::data::Dataset;
use crate::math::sq_dist;

/// k-nearest neighbours over Euclidean distance. Probabilities are neighbour
/// vote fractions; equidistant neighbours are ordered by training index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Knn {
    features: Vec<f64>,
    labels: Vec<usize>,
    n_features: usize,
    n_classes: usize,
    k_neighbors: usize,
}

impl Knn {
    pub(crate) fn fit(data: &Dataset, params: &KnnParams) -> Self {
        Self {
            features: data.features().to_vec(),
            labels: data.labels().to_vec(),
            n_features: data.n_features(),
            n_classes: data.n_classes(),
            k_neighbors: params.k_neighbors.min(data.len()),
        }
    }

    pub(crate) fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let mut dists: Vec<(f64, usize)> = self
            .features
            .chunks_exact(self.n_features)
            .enumerate()
            .map(|(i, row)| (sq_dist(row, x), i))
            .collect();
        let k = self.k_neighbors;
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dists.len() {
            dists.select_nth_unstable_by(k - 1, cmp);
        }
        let mut votes = vec![0.0; self.n_classes];
        for &(_, i) in &dists[..k] {
            votes[self.labels[i]] += 1.0;
        }
        for v in &mut votes {
            *v /= k as f64;
        }
        votes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vote_fractions() {
        let ds = Dataset::from_rows(
            vec![vec![0.0], vec![0.1], vec![0.2], vec![0.9]],
            vec![0, 0, 1, 1],
            2,
        )
        .unwrap();
        let knn = Knn::fit(&ds, &KnnParams { k_neighbors: 3 });
        assert_eq!(knn.predict_proba(&[0.05]), vec![2.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let ds = Dataset::from_rows(vec![vec![0.0], vec![1.0]], vec![1, 0], 2).unwrap();
        let knn = Knn::fit(&ds, &KnnParams { k_neighbors: 1 });
        assert_eq!(knn.predict_proba(&[0.5]), vec![0.0, 1.0]);
    }

    #[test]
    fn k_is_capped_at_training_size() {
        let ds = Dataset::from_rows(vec![vec![0.0], vec![1.0]], vec![1, 0], 2).unwrap();
        let knn = Knn::fit(&ds, &KnnParams { k_neighbors: 10 });
        assert_eq!(knn.predict_proba(&[0.5]), vec![0.5, 0.5]);
    }
}
