use serde::{Deserialize, Serialize};

use crate::dataset::{Series, TimeSeriesSample};
use crate::distance::{distance, DistanceMetric};
use crate::error::DistanceError;

/// One retrieved training sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborHit {
    pub train_index: usize,
    pub distance: f64,
    pub label: String,
}

/// Distances from `query` to every training sample, in training order.
pub fn distances_to(query: &Series, train: &[TimeSeriesSample], metric: &DistanceMetric) -> Result<Vec<f64>, DistanceError> {
    train.iter().map(|s| distance(query, &s.values, metric)).collect()
}

/// The `k` nearest training samples, ascending by `(distance, train_index)`.
pub fn retrieve_neighbors(
    query: &Series,
    train: &[TimeSeriesSample],
    metric: &DistanceMetric,
    k: usize,
) -> Result<Vec<NeighborHit>, DistanceError> {
    if k == 0 {
        return Err(DistanceError::ZeroK);
    }
    if k > train.len() {
        return Err(DistanceError::KTooLarge { k, n: train.len() });
    }
    let dists = distances_to(query, train, metric)?;
    Ok(top_k(&dists, k)
        .into_iter()
        .map(|i| NeighborHit { train_index: i, distance: dists[i], label: train[i].label.clone() })
        .collect())
}

/// Indices of the `k` smallest values, ties to the lower index. Selection
/// keeps a sorted buffer of at most `k` entries.
fn top_k(dists: &[f64], k: usize) -> Vec<usize> {
    let mut best: Vec<usize> = Vec::with_capacity(k + 1);
    for (i, &d) in dists.iter().enumerate() {
        if best.len() == k && d.total_cmp(&dists[best[k - 1]]).is_ge() {
            continue;
        }
        // Earlier indices with equal distance stay in front.
        let pos = best.partition_point(|&b| dists[b].total_cmp(&d).is_le());
        best.insert(pos, i);
        best.truncate(k);
    }
    best
}
