//! Data ingestion and episodic few-shot task construction.

mod domains;
mod kmeans;
mod letor;
mod metaset;
mod synth;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use domains::{build_domains, query_vectors, standardize, DomainConfig, DomainPartition, DomainReport};
pub use kmeans::{assign, kmeans, silhouette, update_centroids, KMeansResult};
pub use letor::{densify, parse_letor, serialize_letor, LetorRecord};
pub use metaset::{make_meta_set, MetaSet, MetaSetConfig, MetaSetManifest, SplitCounts, SplitMode};
pub use synth::{synth_tasks, FamilyKind, SyntheticFamilySpec, TaskFamily};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EpisodeError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("need K >= 2 and at least K points (K = {k}, points = {points})")]
    BadClusterCount { k: usize, points: usize },
    #[error("all points identical: only a single cluster exists")]
    SingleCluster,
    #[error("silhouette {silhouette:.4} below threshold {threshold} at K = {k}; scores by K: {scores:?}")]
    BelowThreshold {
        k: usize,
        silhouette: f64,
        threshold: f64,
        scores: Vec<(usize, f64)>,
    },
    #[error("domain {domain} has {available} records, needs {needed}")]
    InsufficientRecords {
        domain: usize,
        available: usize,
        needed: usize,
    },
    #[error("need {needed} domains, only {available} available")]
    NotEnoughDomains { needed: usize, available: usize },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// A bowl `L(θ) = Σ c_i (θ_i - m_i)²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticTask {
    pub curvature: Vec<f64>,
    pub minimum: Vec<f64>,
}

impl QuadraticTask {
    pub fn loss(&self, theta: &[f64]) -> f64 {
        self.curvature
            .iter()
            .zip(&self.minimum)
            .zip(theta)
            .map(|((c, m), t)| c * (t - m).powi(2))
            .sum()
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        self.curvature
            .iter()
            .zip(&self.minimum)
            .zip(theta)
            .map(|((c, m), t)| 2.0 * c * (t - m))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedQuery {
    pub qid: u64,
    pub docs: Vec<Vec<f64>>,
    pub grades: Vec<u32>,
}

/// Every record a meta-set can draw from, addressed by index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RecordPool {
    Quadratic {
        tasks: Vec<QuadraticTask>,
    },
    Classification {
        examples: Vec<LabeledExample>,
        n_classes: usize,
    },
    Ranking {
        queries: Vec<RankedQuery>,
        max_grade: u32,
    },
    /// Semantic feature records whose classes carry attribute vectors.
    Attributed {
        examples: Vec<LabeledExample>,
        class_attributes: Vec<Vec<f64>>,
    },
}

impl RecordPool {
    pub fn len(&self) -> usize {
        match self {
            RecordPool::Quadratic { tasks } => tasks.len(),
            RecordPool::Classification { examples, .. } => examples.len(),
            RecordPool::Ranking { queries, .. } => queries.len(),
            RecordPool::Attributed { examples, .. } => examples.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Materialise the records with the given ids.
    pub fn batch(&self, ids: &[usize]) -> Batch {
        match self {
            RecordPool::Quadratic { tasks } => {
                Batch::Quadratic(ids.iter().map(|&i| tasks[i].clone()).collect())
            }
            RecordPool::Classification { examples, .. } => {
                Batch::Classification(ids.iter().map(|&i| examples[i].clone()).collect())
            }
            RecordPool::Ranking { queries, .. } => {
                Batch::Ranking(ids.iter().map(|&i| queries[i].clone()).collect())
            }
            RecordPool::Attributed { examples, .. } => {
                let examples: Vec<LabeledExample> =
                    ids.iter().map(|&i| examples[i].clone()).collect();
                let mut candidates: Vec<usize> = examples.iter().map(|e| e.label).collect();
                candidates.sort_unstable();
                candidates.dedup();
                Batch::Attributed {
                    examples,
                    candidates,
                }
            }
        }
    }
}

/// One split (a `D_train`, `D_heldout` or `D_test`) ready for a learner.
#[derive(Clone, Debug, PartialEq)]
pub enum Batch {
    Quadratic(Vec<QuadraticTask>),
    Classification(Vec<LabeledExample>),
    Ranking(Vec<RankedQuery>),
    /// Examples scored against the candidate classes present in the split.
    Attributed {
        examples: Vec<LabeledExample>,
        candidates: Vec<usize>,
    },
}

impl Batch {
    pub fn len(&self) -> usize {
        match self {
            Batch::Quadratic(t) => t.len(),
            Batch::Classification(e) => e.len(),
            Batch::Ranking(q) => q.len(),
            Batch::Attributed { examples, .. } => examples.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
