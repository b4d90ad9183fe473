//! K-means over flattened training series and contrastive negative selection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{ChannelStats, Series, TimeSeriesSample};
use crate::error::ClusterError;
use crate::retrieval::NeighborHit;

/// Space in which series are clustered.
#[derive(Debug, Clone, PartialEq)]
pub enum ClusterSpace {
    Raw,
    /// Per-channel z-normalization with training statistics.
    ZNormalized(ChannelStats),
}

impl ClusterSpace {
    pub fn embed(&self, series: &Series) -> Vec<f64> {
        match self {
            ClusterSpace::Raw => series.flatten_channel_major(),
            ClusterSpace::ZNormalized(stats) => stats.normalize(series).flatten_channel_major(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Cluster id per training index.
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squared distances of the final state.
    pub objective: f64,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every centroid update, in order.
    pub trace: Vec<f64>,
    pub space: ClusterSpace,
}

impl ClusterModel {
    /// Nearest centroid of a vector, ties to the lower cluster id.
    pub fn nearest_centroid(&self, v: &[f64]) -> usize {
        nearest(&self.centroids, v).0
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.assignments.iter().enumerate().filter(|(_, &c)| c == cluster).map(|(i, _)| i).collect()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn nearest(centroids: &[Vec<f64>], v: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(v, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    points.iter().map(|p| nearest(centroids, p).0).collect()
}

fn objective(points: &[Vec<f64>], centroids: &[Vec<f64>], assignments: &[usize]) -> f64 {
    points.iter().zip(assignments).map(|(p, &c)| sq_dist(p, &centroids[c])).sum()
}

/// k-means++ seeding driven by a ChaCha stream.
fn seed_centroids(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            // All remaining mass is zero (duplicates): draw among unchosen indices.
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

/// Recomputes centroids as member means. An empty cluster is reseeded to the
/// point farthest from its currently assigned centroid.
fn update_centroids(points: &[Vec<f64>], centroids: &mut [Vec<f64>], assignments: &[usize]) {
    let dim = points[0].len();
    let k = centroids.len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(assignments) {
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(p) {
            *s += v;
        }
    }
    let old = centroids.to_vec();
    let mut reseeded: Vec<usize> = Vec::new();
    for c in 0..k {
        if counts[c] > 0 {
            centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
        }
    }
    for c in (0..k).filter(|&c| counts[c] == 0) {
        let far = points
            .iter()
            .enumerate()
            .filter(|(i, _)| !reseeded.contains(i))
            .map(|(i, p)| (i, sq_dist(p, &old[assignments[i]])))
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        if let Some((i, _)) = far {
            reseeded.push(i);
            centroids[c] = points[i].clone();
        }
    }
}

/// Lloyd iterations over pre-embedded vectors.
pub fn lloyd(points: &[Vec<f64>], k: usize, seed: u64, max_iters: usize) -> Result<(Vec<Vec<f64>>, Vec<usize>, Vec<f64>, bool), ClusterError> {
    if k == 0 {
        return Err(ClusterError::ZeroClusters);
    }
    if k > points.len() {
        return Err(ClusterError::TooManyClusters { k, n: points.len() });
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(ClusterError::Dimension(dim, p.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(points, k, &mut rng);
    let mut assignments = assign(points, &centroids);
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..max_iters.max(1) {
        update_centroids(points, &mut centroids, &assignments);
        trace.push(objective(points, &centroids, &assignments));
        let next = assign(points, &centroids);
        if next == assignments {
            converged = true;
            break;
        }
        assignments = next;
    }
    if !converged {
        update_centroids(points, &mut centroids, &assignments);
        trace.push(objective(points, &centroids, &assignments));
    }
    Ok((centroids, assignments, trace, converged))
}

/// Fits K-means on the training split, flattened channel-major into `space`.
pub fn kmeans_fit(
    train: &[TimeSeriesSample],
    k: usize,
    seed: u64,
    max_iters: usize,
    space: ClusterSpace,
) -> Result<ClusterModel, ClusterError> {
    if k > train.len() {
        return Err(ClusterError::TooManyClusters { k, n: train.len() });
    }
    let points: Vec<Vec<f64>> = train.iter().map(|s| space.embed(&s.values)).collect();
    let (centroids, assignments, trace, converged) = lloyd(&points, k, seed, max_iters)?;
    let objective = objective(&points, &centroids, &assignments);
    Ok(ClusterModel { k, centroids, assignments, objective, seed, iterations: trace.len(), converged, trace, space })
}

/// Picks `n_neg` contrastive samples from clusters other than the query's.
///
/// Candidates are ranked by their distance to their own centroid (most
/// representative first), ties by training index. The hit distance is that
/// centroid distance.
pub fn select_negatives(
    query: &Series,
    model: &ClusterModel,
    train: &[TimeSeriesSample],
    n_neg: usize,
) -> Result<Vec<NeighborHit>, ClusterError> {
    if n_neg == 0 {
        return Ok(Vec::new());
    }
    let q = model.space.embed(query);
    if let Some(c) = model.centroids.first() {
        if c.len() != q.len() {
            return Err(ClusterError::Dimension(c.len(), q.len()));
        }
    }
    let own = model.nearest_centroid(&q);
    let mut pool: Vec<(usize, f64)> = train
        .iter()
        .enumerate()
        .filter(|(i, _)| model.assignments[*i] != own)
        .map(|(i, s)| (i, sq_dist(&model.space.embed(&s.values), &model.centroids[model.assignments[i]]).sqrt()))
        .collect();
    if pool.len() < n_neg {
        return Err(ClusterError::PoolTooSmall { requested: n_neg, available: pool.len() });
    }
    pool.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(pool
        .into_iter()
        .take(n_neg)
        .map(|(i, d)| NeighborHit { train_index: i, distance: d, label: train[i].label.clone() })
        .collect())
}
