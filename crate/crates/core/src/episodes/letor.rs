use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::EpisodeError;

/// One judged document: `<rel> qid:<id> <fid>:<value> ... #comment`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LetorRecord {
    pub relevance: u32,
    pub qid: u64,
    /// `features[i]` holds feature id `i + 1`.
    pub features: Vec<f64>,
    pub comment: Option<String>,
}

fn parse_line(line: &str, number: usize) -> Result<LetorRecord, EpisodeError> {
    let err = |reason: String| EpisodeError::Parse {
        line: number,
        reason,
    };
    let (body, comment) = match line.split_once('#') {
        Some((body, c)) => (body, Some(c.trim().to_string())),
        None => (line, None),
    };
    let mut tokens = body.split_whitespace();
    let rel_token = tokens.next().ok_or_else(|| err("missing relevance".into()))?;
    let relevance: u32 = rel_token
        .parse()
        .map_err(|_| err(format!("relevance `{rel_token}` is not a non-negative integer")))?;
    let qid_token = tokens.next().ok_or_else(|| err("missing qid".into()))?;
    let qid: u64 = qid_token
        .strip_prefix("qid:")
        .ok_or_else(|| err(format!("expected `qid:<int>`, found `{qid_token}`")))?
        .parse()
        .map_err(|_| err(format!("qid in `{qid_token}` is not an integer")))?;

    let mut sparse = BTreeMap::new();
    for token in tokens {
        let (fid, value) = token
            .split_once(':')
            .ok_or_else(|| err(format!("expected `<fid>:<value>`, found `{token}`")))?;
        let fid: usize = fid
            .parse()
            .map_err(|_| err(format!("feature id `{fid}` is not an integer")))?;
        if fid == 0 {
            return Err(err("feature ids start at 1".into()));
        }
        let value: f64 = value
            .parse()
            .map_err(|_| err(format!("feature value `{value}` is not a number")))?;
        if !value.is_finite() {
            return Err(err(format!("feature {fid} is not finite")));
        }
        if sparse.insert(fid, value).is_some() {
            return Err(err(format!("duplicate feature id {fid}")));
        }
    }
    let max_fid = *sparse
        .keys()
        .next_back()
        .ok_or_else(|| err("no features".into()))?;
    let mut features = vec![0.0; max_fid];
    for (fid, v) in sparse {
        features[fid - 1] = v;
    }
    Ok(LetorRecord {
        relevance,
        qid,
        features,
        comment,
    })
}

/// Parse LETOR text. Blank lines are skipped; line numbers in errors are
/// 1-based. Each record is densified up to its own largest feature id; use
/// [`densify`] to bring a whole file to a common width.
pub fn parse_letor(text: &str) -> Result<Vec<LetorRecord>, EpisodeError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_line(l, i + 1))
        .collect()
}

/// Pad every record with zeros to the widest feature vector.
pub fn densify(records: &mut [LetorRecord]) -> usize {
    let width = records.iter().map(|r| r.features.len()).max().unwrap_or(0);
    for r in records.iter_mut() {
        r.features.resize(width, 0.0);
    }
    width
}

/// Canonical text form: every densified feature written with the shortest
/// round-tripping decimal representation.
pub fn serialize_letor(records: &[LetorRecord]) -> String {
    let mut out = String::new();
    for r in records {
        write!(out, "{} qid:{}", r.relevance, r.qid).expect("string write");
        for (i, v) in r.features.iter().enumerate() {
            write!(out, " {}:{}", i + 1, v).expect("string write");
        }
        if let Some(c) = &r.comment {
            write!(out, " #{c}").expect("string write");
        }
        out.push('\n');
    }
    out
}
