use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EpisodeError;

pub const MANIFEST_VERSION: u32 = 1;

/// Records per domain: `train_shots` (k) in each D_train episode,
/// `heldout` and `test` in the evaluation splits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train_shots: usize,
    pub heldout: usize,
    pub test: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        SplitCounts {
            train_shots: 5,
            heldout: 15,
            test: 15,
        }
    }
}

/// How domains are distributed over the splits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum SplitMode {
    /// Every domain appears in every split; only records are disjoint.
    SharedDomains,
    /// Each domain belongs to exactly one split.
    DisjointDomains {
        train_domains: usize,
        heldout_domains: usize,
        test_domains: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaSetConfig {
    /// Domains (classes) per D_train episode.
    pub n_way: usize,
    #[serde(default)]
    pub counts: SplitCounts,
    pub n_train_batches: usize,
    pub mode: SplitMode,
}

/// Record ids of every split. D_train batches are fixed for the whole run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaSet {
    pub combo_seed: u64,
    pub k: usize,
    pub n_way: usize,
    pub d_train: Vec<Vec<usize>>,
    pub d_heldout: Vec<usize>,
    pub d_test: Vec<usize>,
    pub train_domains: Vec<usize>,
    pub heldout_domains: Vec<usize>,
    pub test_domains: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaSetManifest {
    pub format_version: u32,
    #[serde(flatten)]
    pub meta_set: MetaSet,
}

impl MetaSet {
    pub fn manifest(&self) -> MetaSetManifest {
        MetaSetManifest {
            format_version: MANIFEST_VERSION,
            meta_set: self.clone(),
        }
    }

    /// Every record id used by any split, in split order.
    pub fn all_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.d_train
            .iter()
            .flatten()
            .chain(&self.d_heldout)
            .chain(&self.d_test)
            .copied()
    }
}

fn take(pool: &mut Vec<usize>, n: usize, domain: usize) -> Result<Vec<usize>, EpisodeError> {
    if pool.len() < n {
        return Err(EpisodeError::InsufficientRecords {
            domain,
            available: pool.len(),
            needed: n,
        });
    }
    Ok(pool.drain(..n).collect())
}

/// Build a meta-set from a domain (or class) label per record.
///
/// Records are shuffled once per domain with `combo_seed` and drawn without
/// replacement, so splits never share a record.
pub fn make_meta_set(domains: &[usize], config: &MetaSetConfig, combo_seed: u64) -> Result<MetaSet, EpisodeError> {
    let k = config.counts.train_shots;
    if k == 0 || config.n_way == 0 || config.n_train_batches == 0 {
        return Err(EpisodeError::Invalid(
            "train_shots, n_way and n_train_batches must be positive".into(),
        ));
    }
    if domains.is_empty() {
        return Err(EpisodeError::Invalid("no records".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(combo_seed);
    let n_domains = domains.iter().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); n_domains];
    for (id, &d) in domains.iter().enumerate() {
        members[d].push(id);
    }
    for m in members.iter_mut() {
        m.shuffle(&mut rng);
    }
    let present: Vec<usize> = (0..n_domains).filter(|&d| !members[d].is_empty()).collect();

    let mut d_heldout = Vec::new();
    let mut d_test = Vec::new();
    let (train_domains, heldout_domains, test_domains) = match config.mode {
        SplitMode::SharedDomains => {
            for &d in &present {
                let needed = k + config.counts.heldout + config.counts.test;
                if members[d].len() < needed {
                    return Err(EpisodeError::InsufficientRecords {
                        domain: d,
                        available: members[d].len(),
                        needed,
                    });
                }
                d_heldout.extend(take(&mut members[d], config.counts.heldout, d)?);
                d_test.extend(take(&mut members[d], config.counts.test, d)?);
            }
            (present.clone(), present.clone(), present)
        }
        SplitMode::DisjointDomains {
            train_domains,
            heldout_domains,
            test_domains,
        } => {
            let needed = train_domains + heldout_domains + test_domains;
            if present.len() < needed {
                return Err(EpisodeError::NotEnoughDomains {
                    needed,
                    available: present.len(),
                });
            }
            let mut order = present;
            order.shuffle(&mut rng);
            let mut train: Vec<usize> = order[..train_domains].to_vec();
            let mut heldout: Vec<usize> = order[train_domains..train_domains + heldout_domains].to_vec();
            let mut test: Vec<usize> = order[train_domains + heldout_domains..needed].to_vec();
            train.sort_unstable();
            heldout.sort_unstable();
            test.sort_unstable();
            for &d in &heldout {
                d_heldout.extend(take(&mut members[d], config.counts.heldout, d)?);
            }
            for &d in &test {
                d_test.extend(take(&mut members[d], config.counts.test, d)?);
            }
            (train, heldout, test)
        }
    };
    if train_domains.len() < config.n_way {
        return Err(EpisodeError::NotEnoughDomains {
            needed: config.n_way,
            available: train_domains.len(),
        });
    }

    let mut d_train = Vec::with_capacity(config.n_train_batches);
    for _ in 0..config.n_train_batches {
        let eligible: Vec<usize> = train_domains
            .iter()
            .copied()
            .filter(|&d| members[d].len() >= k)
            .collect();
        if eligible.len() < config.n_way {
            let short = train_domains
                .iter()
                .copied()
                .find(|&d| members[d].len() < k)
                .expect("some domain ran short");
            return Err(EpisodeError::InsufficientRecords {
                domain: short,
                available: members[short].len(),
                needed: k,
            });
        }
        let mut chosen: Vec<usize> = index::sample(&mut rng, eligible.len(), config.n_way)
            .into_iter()
            .map(|i| eligible[i])
            .collect();
        chosen.sort_unstable();
        let mut batch = Vec::with_capacity(k * config.n_way);
        for d in chosen {
            batch.extend(take(&mut members[d], k, d)?);
        }
        d_train.push(batch);
    }

    Ok(MetaSet {
        combo_seed,
        k,
        n_way: config.n_way,
        d_train,
        d_heldout,
        d_test,
        train_domains,
        heldout_domains,
        test_domains,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn labels(domains: usize, per: usize) -> Vec<usize> {
        (0..domains * per).map(|i| i % domains).collect()
    }

    fn shared(n_way: usize, batches: usize) -> MetaSetConfig {
        MetaSetConfig {
            n_way,
            counts: SplitCounts::default(),
            n_train_batches: batches,
            mode: SplitMode::SharedDomains,
        }
    }

    #[test]
    fn episodes_hold_k_records_per_domain() {
        let domains = labels(4, 50);
        let m = make_meta_set(&domains, &shared(3, 4), 7).unwrap();
        for batch in &m.d_train {
            assert_eq!(batch.len(), 15);
            let mut per = std::collections::HashMap::new();
            for &id in batch {
                *per.entry(domains[id]).or_insert(0) += 1;
            }
            assert_eq!(per.len(), 3);
            assert!(per.values().all(|&c| c == 5));
        }
        assert_eq!(m.d_heldout.len(), 4 * 15);
        assert_eq!(m.d_test.len(), 4 * 15);
    }

    #[test]
    fn splits_are_disjoint_without_replacement() {
        let domains = labels(10, 40);
        let config = MetaSetConfig {
            n_way: 3,
            counts: SplitCounts::default(),
            n_train_batches: 6,
            mode: SplitMode::DisjointDomains {
                train_domains: 5,
                heldout_domains: 2,
                test_domains: 3,
            },
        };
        for seed in 0..5 {
            let m = make_meta_set(&domains, &config, seed).unwrap();
            let ids: Vec<usize> = m.all_ids().collect();
            assert_eq!(ids.len(), ids.iter().collect::<HashSet<_>>().len());
            let train: HashSet<usize> = m.train_domains.iter().copied().collect();
            assert!(m.heldout_domains.iter().all(|d| !train.contains(d)));
            assert!(m.d_test.iter().all(|&id| m.test_domains.contains(&domains[id])));
            assert_eq!((m.heldout_domains.len(), m.test_domains.len()), (2, 3));
        }
    }

    #[test]
    fn insufficient_records_reported() {
        let domains = labels(3, 20);
        assert!(matches!(
            make_meta_set(&domains, &shared(2, 1), 0),
            Err(EpisodeError::InsufficientRecords { needed: 35, .. })
        ));
    }

    #[test]
    fn same_seed_same_manifest() {
        let domains = labels(5, 60);
        let a = make_meta_set(&domains, &shared(2, 3), 11).unwrap();
        let b = make_meta_set(&domains, &shared(2, 3), 11).unwrap();
        assert_eq!(
            serde_json::to_string(&a.manifest()).unwrap(),
            serde_json::to_string(&b.manifest()).unwrap()
        );
        assert_ne!(a, make_meta_set(&domains, &shared(2, 3), 12).unwrap());
    }
}
