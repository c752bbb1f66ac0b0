use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans, silhouette};
use super::letor::LetorRecord;
use super::EpisodeError;

/// Pseudo-domain labels for a set of points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainPartition {
    pub format_version: u32,
    pub k: usize,
    pub assignments: Vec<usize>,
    pub silhouette: f64,
    pub wcss: f64,
}

impl DomainPartition {
    /// Record ids grouped by domain.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &d) in self.assignments.iter().enumerate() {
            out[d].push(i);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainConfig {
    pub k: usize,
    pub threshold: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Extra K values scored for the report (the configured `k` is always
    /// scored).
    #[serde(default)]
    pub report_ks: Vec<usize>,
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig {
            k: 10,
            threshold: 0.5,
            restarts: 10,
            seed: 0,
            report_ks: Vec::new(),
        }
    }
}

/// Silhouette score for every K that was evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainReport {
    pub scores: Vec<(usize, f64)>,
    pub threshold: f64,
}

/// Per-dimension zero mean and unit (population) variance. Constant
/// dimensions become 0.
pub fn standardize(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let Some(first) = points.first() else {
        return Vec::new();
    };
    let n = points.len() as f64;
    let dim = first.len();
    let mut mean = vec![0.0; dim];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; dim];
    for p in points {
        for ((s, v), m) in var.iter_mut().zip(p).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    points
        .iter()
        .map(|p| {
            p.iter()
                .zip(&mean)
                .zip(&var)
                .map(|((v, m), s)| if *s > 0.0 { (v - m) / s.sqrt() } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Mean document feature vector per query, in order of first appearance.
pub fn query_vectors(records: &[LetorRecord]) -> (Vec<u64>, Vec<Vec<f64>>) {
    let width = records.iter().map(|r| r.features.len()).max().unwrap_or(0);
    let mut qids: Vec<u64> = Vec::new();
    let mut sums: Vec<Vec<f64>> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for r in records {
        let slot = *index.entry(r.qid).or_insert_with(|| {
            qids.push(r.qid);
            sums.push(vec![0.0; width]);
            counts.push(0);
            qids.len() - 1
        });
        counts[slot] += 1;
        for (s, v) in sums[slot].iter_mut().zip(&r.features) {
            *s += v;
        }
    }
    let means = sums
        .into_iter()
        .zip(counts)
        .map(|(s, n)| s.into_iter().map(|v| v / n as f64).collect())
        .collect();
    (qids, means)
}

/// Standardise, cluster at `config.k`, and accept the partition only when
/// its mean silhouette reaches the threshold.
pub fn build_domains(
    points: &[Vec<f64>],
    config: &DomainConfig,
) -> Result<(DomainPartition, DomainReport), EpisodeError> {
    let z = standardize(points);
    let mut scores = Vec::new();
    let mut chosen = None;
    let mut ks = config.report_ks.clone();
    ks.push(config.k);
    ks.sort_unstable();
    ks.dedup();
    for k in ks {
        let result = match kmeans(&z, k, config.restarts, config.seed) {
            Ok(r) => r,
            Err(e) if k == config.k => return Err(e),
            Err(_) => continue,
        };
        let s = silhouette(&z, &result.assignments, k)?;
        scores.push((k, s));
        if k == config.k {
            chosen = Some((result, s));
        }
    }
    let (result, s) = chosen.expect("configured k is always evaluated");
    if s < config.threshold {
        return Err(EpisodeError::BelowThreshold {
            k: config.k,
            silhouette: s,
            threshold: config.threshold,
            scores,
        });
    }
    Ok((
        DomainPartition {
            format_version: 1,
            k: config.k,
            assignments: result.assignments,
            silhouette: s,
            wcss: result.wcss,
        },
        DomainReport {
            scores,
            threshold: config.threshold,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn standardized_columns() {
        let pts = vec![vec![1.0, 5.0], vec![3.0, 5.0], vec![5.0, 5.0]];
        let z = standardize(&pts);
        let mean: f64 = z.iter().map(|p| p[0]).sum::<f64>() / 3.0;
        let var: f64 = z.iter().map(|p| p[0] * p[0]).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        assert!(z.iter().all(|p| p[1] == 0.0));
    }

    #[test]
    fn query_means_in_first_appearance_order() {
        let rec = |qid, f: Vec<f64>| LetorRecord {
            relevance: 0,
            qid,
            features: f,
            comment: None,
        };
        let (qids, means) = query_vectors(&[
            rec(7, vec![1.0, 2.0]),
            rec(3, vec![0.0]),
            rec(7, vec![3.0, 4.0]),
        ]);
        assert_eq!(qids, vec![7, 3]);
        assert_eq!(means, vec![vec![2.0, 3.0], vec![0.0, 0.0]]);
    }

    #[test]
    fn single_blob_rejected_with_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = Normal::new(0.0, 1.0).unwrap();
        let pts: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..4).map(|_| n.sample(&mut rng)).collect())
            .collect();
        let config = DomainConfig {
            report_ks: vec![2, 3],
            ..DomainConfig::default()
        };
        match build_domains(&pts, &config) {
            Err(EpisodeError::BelowThreshold { k, scores, .. }) => {
                assert_eq!(k, 10);
                assert_eq!(scores.iter().map(|s| s.0).collect::<Vec<_>>(), vec![2, 3, 10]);
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }
}
