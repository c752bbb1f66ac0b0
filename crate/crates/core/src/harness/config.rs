use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::episodes::{DomainConfig, FamilyKind, MetaSetConfig, SplitMode, SyntheticFamilySpec};
use crate::learners::{LearnerConfig, LearnerKind};
use crate::meta_policy::MetaPolicyConfig;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum TaskSource {
    Synthetic {
        family: SyntheticFamilySpec,
        n_tasks: usize,
    },
    Letor {
        path: PathBuf,
        #[serde(default)]
        domains: DomainConfig,
        /// Defaults to the largest relevance grade in the file.
        #[serde(default)]
        max_grade: Option<u32>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: u32,
    /// Row name in reports; defaults to the output directory name.
    #[serde(default)]
    pub label: Option<String>,
    pub task: TaskSource,
    pub meta_set: MetaSetConfig,
    pub learner: LearnerConfig,
    pub meta_policy: MetaPolicyConfig,
    #[serde(default = "default_combos")]
    pub combos: usize,
    /// Run seeds; when empty, `meta_policy.seed` is the only seed.
    #[serde(default)]
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

fn default_combos() -> usize {
    5
}

fn invalid(path: &str, msg: impl std::fmt::Display) -> HarnessError {
    HarnessError::Validation(format!("{path}: {msg}"))
}

impl ExperimentConfig {
    /// Parse JSON; errors name the offending field path.
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            HarnessError::Validation(format!("{path}: {inner}"))
        })
    }

    /// Load and validate a config file. A relative LETOR path is resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut config = Self::from_json(&text)?;
        if let TaskSource::Letor { path: data, .. } = &mut config.task {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn run_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.meta_policy.seed]
        } else {
            self.seeds.clone()
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.format_version != FORMAT_VERSION {
            return Err(invalid(
                "format_version",
                format!("expected {FORMAT_VERSION}, found {}", self.format_version),
            ));
        }
        if self.combos == 0 {
            return Err(invalid("combos", "must be at least 1"));
        }
        self.meta_policy
            .validate()
            .map_err(|e| HarnessError::Validation(format!("meta_policy.{}", e.to_string().trim_start_matches("invalid configuration: "))))?;
        let ms = &self.meta_set;
        if ms.n_way == 0 {
            return Err(invalid("meta_set.n_way", "must be at least 1"));
        }
        if ms.n_train_batches == 0 {
            return Err(invalid("meta_set.n_train_batches", "must be at least 1"));
        }
        if ms.counts.train_shots == 0 {
            return Err(invalid("meta_set.counts.train_shots", "must be at least 1"));
        }
        if ms.counts.heldout == 0 || ms.counts.test == 0 {
            return Err(invalid("meta_set.counts", "heldout and test must be at least 1"));
        }
        if let SplitMode::DisjointDomains {
            train_domains,
            heldout_domains,
            test_domains,
        } = ms.mode
        {
            if train_domains == 0 || heldout_domains == 0 || test_domains == 0 {
                return Err(invalid("meta_set.mode", "every split needs at least one domain"));
            }
        }
        let expected = match &self.task {
            TaskSource::Synthetic { family, n_tasks } => {
                family
                    .validate()
                    .map_err(|e| invalid("task.family", e))?;
                if *n_tasks == 0 {
                    return Err(invalid("task.n_tasks", "must be at least 1"));
                }
                match family.kind {
                    FamilyKind::QuadraticBowl => LearnerKind::Direct,
                    FamilyKind::GaussianBlobs => LearnerKind::Mlp,
                    FamilyKind::TwoGroupAttributes => LearnerKind::DualAffinity,
                }
            }
            TaskSource::Letor { path, domains, .. } => {
                if !path.is_file() {
                    return Err(invalid("task.path", format!("{} does not exist", path.display())));
                }
                if domains.k < 2 {
                    return Err(invalid("task.domains.k", "must be at least 2"));
                }
                LearnerKind::Mlp
            }
        };
        if self.learner.kind != expected {
            return Err(invalid(
                "learner.kind",
                format!("{:?} does not fit this task source (expected {expected:?})", self.learner.kind),
            ));
        }
        if self.learner.kind == LearnerKind::Direct && self.learner.group_size == 0 {
            return Err(invalid("learner.group_size", "must be at least 1"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialisation.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SAMPLE: &str = r#"{
        "format_version": 1,
        "task": {"source": "synthetic", "family": {"kind": "quadratic_bowl", "dimension": 4, "noise": 0.1, "seed": 3}, "n_tasks": 12},
        "meta_set": {"n_way": 1, "counts": {"train_shots": 2, "heldout": 2, "test": 2}, "n_train_batches": 3, "mode": {"mode": "shared_domains"}},
        "learner": {"kind": "direct"},
        "meta_policy": {"lr_grid": [0.1], "p_explore": 0.2, "meta_epochs": 3, "width_grid": [1]},
        "combos": 2,
        "seeds": [1, 2],
        "output_dir": "out"
    }"#;

    #[test]
    fn sample_parses_and_validates() {
        let c = ExperimentConfig::from_json(SAMPLE).unwrap();
        c.validate().unwrap();
        assert_eq!(c.run_seeds(), vec![1, 2]);
        assert_eq!(c.hash().len(), 64);
        assert_eq!(c.hash(), ExperimentConfig::from_json(SAMPLE).unwrap().hash());
    }

    #[test]
    fn parse_errors_carry_field_paths() {
        let bad = SAMPLE.replace("\"p_explore\": 0.2", "\"p_explore\": \"high\"");
        match ExperimentConfig::from_json(&bad) {
            Err(HarnessError::Validation(m)) => assert!(m.starts_with("meta_policy.p_explore"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_errors_carry_field_paths() {
        let mut c = ExperimentConfig::from_json(SAMPLE).unwrap();
        c.meta_policy.p_explore = 2.0;
        match c.validate() {
            Err(HarnessError::Validation(m)) => assert!(m.starts_with("meta_policy.p_explore"), "{m}"),
            other => panic!("{other:?}"),
        }
        let mut c = ExperimentConfig::from_json(SAMPLE).unwrap();
        c.learner.kind = LearnerKind::Mlp;
        assert!(matches!(c.validate(), Err(HarnessError::Validation(m)) if m.starts_with("learner.kind")));
        let mut c = ExperimentConfig::from_json(SAMPLE).unwrap();
        c.task = TaskSource::Letor {
            path: "/definitely/missing.txt".into(),
            domains: DomainConfig::default(),
            max_grade: None,
        };
        assert!(matches!(c.validate(), Err(HarnessError::Validation(m)) if m.starts_with("task.path")));
    }
}
