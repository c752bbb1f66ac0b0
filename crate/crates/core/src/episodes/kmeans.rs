use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EpisodeError;
use crate::rng::{self, Purpose};

const MAX_ITERATIONS: usize = 300;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub wcss: f64,
    /// Within-cluster sum of squares after each assignment step of the
    /// winning restart.
    pub history: Vec<f64>,
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Assign every point to its nearest centroid (lowest index on ties).
/// Returns the assignment and its WCSS.
pub fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut wcss = 0.0;
    let labels = points
        .iter()
        .map(|p| {
            let (c, d) = nearest(p, centroids);
            wcss += d;
            c
        })
        .collect();
    (labels, wcss)
}

/// Cluster means; an empty cluster keeps its previous centroid.
pub fn update_centroids(points: &[Vec<f64>], labels: &[usize], previous: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = previous[0].len();
    let mut sums = vec![vec![0.0; dim]; previous.len()];
    let mut counts = vec![0usize; previous.len()];
    for (p, &c) in points.iter().zip(labels) {
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(p) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(counts)
        .zip(previous)
        .map(|((s, n), prev)| {
            if n == 0 {
                prev.clone()
            } else {
                s.into_iter().map(|v| v / n as f64).collect()
            }
        })
        .collect()
}

fn plus_plus_seeds(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> KMeansResult {
    let (mut labels, mut wcss) = assign(points, &centroids);
    let mut history = vec![wcss];
    for _ in 0..MAX_ITERATIONS {
        centroids = update_centroids(points, &labels, &centroids);
        let (next, next_wcss) = assign(points, &centroids);
        let converged = next == labels;
        labels = next;
        wcss = next_wcss;
        history.push(wcss);
        if converged {
            break;
        }
    }
    KMeansResult {
        k: centroids.len(),
        assignments: labels,
        centroids,
        wcss,
        history,
    }
}

/// Lloyd's algorithm with k-means++ seeding; the restart with the lowest
/// WCSS wins (earliest restart on ties).
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> Result<KMeansResult, EpisodeError> {
    if k < 2 || points.len() < k {
        return Err(EpisodeError::BadClusterCount {
            k,
            points: points.len(),
        });
    }
    if points.iter().all(|p| p == &points[0]) {
        return Err(EpisodeError::SingleCluster);
    }
    let mut best: Option<KMeansResult> = None;
    for restart in 0..restarts.max(1) {
        let mut rng = rng::stream(seed, Purpose::Clustering, restart as u64, 0);
        let result = lloyd(points, plus_plus_seeds(points, k, &mut rng));
        if best.as_ref().is_none_or(|b| result.wcss < b.wcss) {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Mean silhouette `(b - a) / max(a, b)` with Euclidean distances;
/// points in singleton clusters contribute 0.
pub fn silhouette(points: &[Vec<f64>], labels: &[usize], k: usize) -> Result<f64, EpisodeError> {
    if k < 2 {
        return Err(EpisodeError::BadClusterCount {
            k,
            points: points.len(),
        });
    }
    if labels.len() != points.len() {
        return Err(EpisodeError::Invalid("one label per point required".into()));
    }
    let mut sizes = vec![0usize; k];
    for &l in labels {
        if l >= k {
            return Err(EpisodeError::Invalid(format!("label {l} out of range for K = {k}")));
        }
        sizes[l] += 1;
    }
    if sizes.contains(&0) {
        return Err(EpisodeError::Invalid("every cluster must be non-empty".into()));
    }
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let own = labels[i];
        if sizes[own] == 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for (j, q) in points.iter().enumerate() {
            if i != j {
                sums[labels[j]] += sq_dist(p, q).sqrt();
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / points.len() as f64)
}
