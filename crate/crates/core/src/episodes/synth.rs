use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EpisodeError, LabeledExample, QuadraticTask, RecordPool};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    QuadraticBowl,
    GaussianBlobs,
    TwoGroupAttributes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticFamilySpec {
    pub kind: FamilyKind,
    pub dimension: usize,
    pub noise: f64,
    pub seed: u64,
    /// Classes for the classification families.
    #[serde(default = "default_classes")]
    pub n_classes: usize,
    /// Standard deviation of class means (blobs) around the origin.
    #[serde(default = "default_separation")]
    pub separation: f64,
    /// Width of class attribute vectors for `two_group_attributes`.
    #[serde(default = "default_attribute_dim")]
    pub attribute_dim: usize,
}

fn default_classes() -> usize {
    5
}

fn default_separation() -> f64 {
    4.0
}

fn default_attribute_dim() -> usize {
    4
}

impl SyntheticFamilySpec {
    pub fn new(kind: FamilyKind, dimension: usize, noise: f64, seed: u64) -> Self {
        SyntheticFamilySpec {
            kind,
            dimension,
            noise,
            seed,
            n_classes: default_classes(),
            separation: default_separation(),
            attribute_dim: default_attribute_dim(),
        }
    }

    pub fn validate(&self) -> Result<(), EpisodeError> {
        if self.dimension == 0 {
            return Err(EpisodeError::Invalid("dimension must be >= 1".into()));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(EpisodeError::Invalid("noise must be finite and >= 0".into()));
        }
        if self.kind != FamilyKind::QuadraticBowl && self.n_classes < 2 {
            return Err(EpisodeError::Invalid("classification families need >= 2 classes".into()));
        }
        if self.kind == FamilyKind::TwoGroupAttributes && self.attribute_dim == 0 {
            return Err(EpisodeError::Invalid("attribute_dim must be >= 1".into()));
        }
        Ok(())
    }
}

/// A generated record pool with a domain label per record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskFamily {
    pub pool: RecordPool,
    pub domains: Vec<usize>,
}

fn sample_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * sample_normal(rng)).collect()
}

/// Generate a task family.
///
/// * `quadratic_bowl`: `n_tasks` bowls sharing per-coordinate curvature
///   scales `10^U(-1.5, 0.5)` (jittered 10% per task) and minima
///   `μ + noise·ε` around a family-wide centre `μ`. All bowls form one domain.
/// * `gaussian_blobs`: `n_tasks` records per class around class means with
///   standard deviation `separation`; records carry `noise`-scaled jitter.
/// * `two_group_attributes`: every class gets an attribute vector `a_c`;
///   semantic features are `M·a_c + noise·ε` with a fixed random `M`.
///   `n_tasks` records per class.
pub fn synth_tasks(spec: &SyntheticFamilySpec, n_tasks: usize) -> Result<TaskFamily, EpisodeError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.dimension;
    match spec.kind {
        FamilyKind::QuadraticBowl => {
            let scales: Vec<f64> = (0..d)
                .map(|_| 10f64.powf(rng.random_range(-1.5..0.5)))
                .collect();
            let centre = gaussian(&mut rng, d, 1.0);
            let tasks = (0..n_tasks)
                .map(|_| QuadraticTask {
                    curvature: scales
                        .iter()
                        .map(|s| s * (1.0 + 0.1 * rng.random_range(-1.0..1.0)))
                        .collect(),
                    minimum: centre
                        .iter()
                        .map(|c| c + spec.noise * sample_normal(&mut rng))
                        .collect(),
                })
                .collect();
            Ok(TaskFamily {
                pool: RecordPool::Quadratic { tasks },
                domains: vec![0; n_tasks],
            })
        }
        FamilyKind::GaussianBlobs => {
            let means: Vec<Vec<f64>> = (0..spec.n_classes)
                .map(|_| gaussian(&mut rng, d, spec.separation))
                .collect();
            let mut examples = Vec::with_capacity(n_tasks * spec.n_classes);
            let mut domains = Vec::with_capacity(examples.capacity());
            for _ in 0..n_tasks {
                for (label, mean) in means.iter().enumerate() {
                    let jitter = gaussian(&mut rng, d, spec.noise);
                    examples.push(LabeledExample {
                        features: mean.iter().zip(jitter).map(|(m, e)| m + e).collect(),
                        label,
                    });
                    domains.push(label);
                }
            }
            Ok(TaskFamily {
                pool: RecordPool::Classification {
                    examples,
                    n_classes: spec.n_classes,
                },
                domains,
            })
        }
        FamilyKind::TwoGroupAttributes => {
            let a_dim = spec.attribute_dim;
            let class_attributes: Vec<Vec<f64>> = (0..spec.n_classes)
                .map(|_| gaussian(&mut rng, a_dim, 1.0))
                .collect();
            let mixing = Normal::new(0.0, (1.0 / a_dim as f64).sqrt()).expect("positive std");
            let m: Vec<Vec<f64>> = (0..d)
                .map(|_| (0..a_dim).map(|_| mixing.sample(&mut rng)).collect())
                .collect();
            let mut examples = Vec::with_capacity(n_tasks * spec.n_classes);
            let mut domains = Vec::with_capacity(examples.capacity());
            for _ in 0..n_tasks {
                for (label, attr) in class_attributes.iter().enumerate() {
                    let features = m
                        .iter()
                        .map(|row| {
                            let clean: f64 = row.iter().zip(attr).map(|(w, a)| w * a).sum();
                            clean + spec.noise * sample_normal(&mut rng)
                        })
                        .collect();
                    examples.push(LabeledExample { features, label });
                    domains.push(label);
                }
            }
            Ok(TaskFamily {
                pool: RecordPool::Attributed {
                    examples,
                    class_attributes,
                },
                domains,
            })
        }
    }
}
