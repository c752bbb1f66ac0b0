use std::collections::HashMap;
use std::fs;

use serde::{Deserialize, Serialize};

use super::config::TaskSource;
use super::HarnessError;
use crate::episodes::{
    build_domains, densify, parse_letor, query_vectors, synth_tasks, DomainPartition, DomainReport,
    LetorRecord, RankedQuery, RecordPool,
};

/// Clustering outcome for LETOR sources.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainInfo {
    pub qids: Vec<u64>,
    pub partition: DomainPartition,
    pub report: DomainReport,
}

pub struct LoadedTask {
    pub pool: RecordPool,
    /// Domain (or class) label per pool record.
    pub domains: Vec<usize>,
    pub domain_info: Option<DomainInfo>,
}

/// Group documents by query in order of first appearance.
pub fn group_queries(records: &[LetorRecord]) -> Vec<RankedQuery> {
    let mut index = HashMap::new();
    let mut queries: Vec<RankedQuery> = Vec::new();
    for r in records {
        let slot = *index.entry(r.qid).or_insert_with(|| {
            queries.push(RankedQuery {
                qid: r.qid,
                docs: Vec::new(),
                grades: Vec::new(),
            });
            queries.len() - 1
        });
        queries[slot].docs.push(r.features.clone());
        queries[slot].grades.push(r.relevance);
    }
    queries
}

pub fn load_task(source: &TaskSource) -> Result<LoadedTask, HarnessError> {
    match source {
        TaskSource::Synthetic { family, n_tasks } => {
            let f = synth_tasks(family, *n_tasks)?;
            Ok(LoadedTask {
                pool: f.pool,
                domains: f.domains,
                domain_info: None,
            })
        }
        TaskSource::Letor {
            path,
            domains,
            max_grade,
        } => {
            let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            let mut records = parse_letor(&text)?;
            densify(&mut records);
            let (qids, vectors) = query_vectors(&records);
            let (partition, report) = build_domains(&vectors, domains)?;
            let queries = group_queries(&records);
            let max_grade = max_grade.unwrap_or_else(|| records.iter().map(|r| r.relevance).max().unwrap_or(0));
            Ok(LoadedTask {
                pool: RecordPool::Ranking { queries, max_grade },
                domains: partition.assignments.clone(),
                domain_info: Some(DomainInfo {
                    qids,
                    partition,
                    report,
                }),
            })
        }
    }
}
