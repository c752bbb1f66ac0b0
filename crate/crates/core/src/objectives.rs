//! Training losses and evaluation metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numcore::{Graph, NodeId, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("need at least {needed} items, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("grade {grade} exceeds the configured maximum {max}")]
    GradeTooLarge { grade: u32, max: u32 },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("non-finite score")]
    NonFiniteScore,
    #[error("unsupported confidence level {0}")]
    UnsupportedLevel(f64),
}

/// `-log softmax(logits)[label]` as a scalar node.
///
/// Uses a fused log-softmax, so saturated logits stay finite.
pub fn cross_entropy(
    g: &mut Graph,
    logits: NodeId,
    classes: usize,
    label: usize,
) -> Result<NodeId, ObjectiveError> {
    if classes < 2 {
        return Err(ObjectiveError::TooFew {
            needed: 2,
            got: classes,
        });
    }
    if label >= classes {
        return Err(ObjectiveError::LabelOutOfRange { label, classes });
    }
    let log_p = g.log_softmax(logits);
    let picked = g.slice(log_p, 0, label, label + 1);
    Ok(g.scale(picked, -1.0))
}

/// Pairwise logistic ranking loss node plus a flag for the degenerate case.
#[derive(Clone, Copy, Debug)]
pub struct RankLoss {
    pub node: NodeId,
    /// Set when every grade is equal: the loss is the constant 0.
    pub no_pairs: bool,
    pub pairs: usize,
}

/// Mean of `log(1 + exp(-(s_i - s_j)))` over pairs with `grade_i > grade_j`.
///
/// `scores` must evaluate to a vector of length `grades.len()`. The pair
/// differences come from one constant matmul, and each term is evaluated as
/// `-log_softmax([d, 0])[0]`, which stays finite for any score gap.
pub fn pairwise_rank_loss(
    g: &mut Graph,
    scores: NodeId,
    grades: &[u32],
) -> Result<RankLoss, ObjectiveError> {
    let n = grades.len();
    if n < 2 {
        return Err(ObjectiveError::TooFew { needed: 2, got: n });
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| grades[i] > grades[j])
        .collect();
    if pairs.is_empty() {
        let zero = g.constant(Tensor::scalar(0.0));
        return Ok(RankLoss {
            node: zero,
            no_pairs: true,
            pairs: 0,
        });
    }
    let p = pairs.len();
    let mut diff = vec![0.0; p * n];
    for (row, &(i, j)) in pairs.iter().enumerate() {
        diff[row * n + i] = 1.0;
        diff[row * n + j] = -1.0;
    }
    let diff = g.constant(Tensor::matrix(p, n, diff).expect("p x n"));
    let d = g.matmul(diff, scores);
    let d = g.reshape(d, &[p, 1]);
    let zeros = g.constant(Tensor::zeros(&[p, 1]));
    let logits = g.concat(&[d, zeros], 1);
    let log_p = g.log_softmax(logits);
    let first = g.slice(log_p, 1, 0, 1);
    let mean = g.mean(first);
    Ok(RankLoss {
        node: g.scale(mean, -1.0),
        no_pairs: false,
        pairs: p,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub score: f64,
    pub grade: u32,
}

/// Scored items with relevance grades.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    items: Vec<RankedItem>,
}

impl RankedList {
    pub fn new(items: Vec<RankedItem>, max_grade: u32) -> Result<Self, ObjectiveError> {
        if items.is_empty() {
            return Err(ObjectiveError::TooFew { needed: 1, got: 0 });
        }
        for item in &items {
            if item.grade > max_grade {
                return Err(ObjectiveError::GradeTooLarge {
                    grade: item.grade,
                    max: max_grade,
                });
            }
            if !item.score.is_finite() {
                return Err(ObjectiveError::NonFiniteScore);
            }
        }
        Ok(RankedList { items })
    }

    pub fn from_parts(scores: &[f64], grades: &[u32], max_grade: u32) -> Result<Self, ObjectiveError> {
        if scores.len() != grades.len() {
            return Err(ObjectiveError::LengthMismatch(scores.len(), grades.len()));
        }
        let items = scores
            .iter()
            .zip(grades)
            .map(|(&score, &grade)| RankedItem { score, grade })
            .collect();
        RankedList::new(items, max_grade)
    }

    pub fn items(&self) -> &[RankedItem] {
        &self.items
    }

    /// Grades in descending-score order; ties keep their original order.
    pub fn ranked_grades(&self) -> Vec<u32> {
        let mut order: Vec<usize> = (0..self.items.len()).collect();
        order.sort_by(|&a, &b| {
            self.items[b]
                .score
                .partial_cmp(&self.items[a].score)
                .expect("finite scores")
        });
        order.into_iter().map(|i| self.items[i].grade).collect()
    }
}

/// DCG over the first `k` grades with gain `2^g - 1` and discount `log2(i + 1)`.
pub fn dcg_at_k(grades: &[u32], k: usize) -> f64 {
    grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| (2f64.powi(g as i32) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

pub fn ndcg_at_k(ranked: &RankedList, k: usize) -> Result<f64, ObjectiveError> {
    if k == 0 {
        return Err(ObjectiveError::ZeroK);
    }
    let grades = ranked.ranked_grades();
    let mut ideal = grades.clone();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg_at_k(&ideal, k);
    if idcg == 0.0 {
        return Ok(0.0);
    }
    Ok(dcg_at_k(&grades, k) / idcg)
}

/// 1.0 when the top-scored item carries the list's maximum grade.
pub fn top1_hit(ranked: &RankedList) -> f64 {
    let grades = ranked.ranked_grades();
    let best = grades.iter().copied().max().unwrap_or(0);
    if grades[0] == best {
        1.0
    } else {
        0.0
    }
}

pub fn top1_accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64, ObjectiveError> {
    if predictions.len() != labels.len() {
        return Err(ObjectiveError::LengthMismatch(predictions.len(), labels.len()));
    }
    if predictions.is_empty() {
        return Err(ObjectiveError::TooFew { needed: 1, got: 0 });
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Mean with a two-sided normal-approximation confidence half-width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub half_width: f64,
    pub confidence_level: f64,
    pub n_runs: usize,
}

/// Two-sided standard normal quantiles for the supported levels.
const Z_TABLE: [(f64, f64); 3] = [(0.90, 1.6449), (0.95, 1.9600), (0.99, 2.5758)];

pub fn z_value(level: f64) -> Result<f64, ObjectiveError> {
    Z_TABLE
        .iter()
        .find(|(l, _)| (l - level).abs() < 1e-12)
        .map(|&(_, z)| z)
        .ok_or(ObjectiveError::UnsupportedLevel(level))
}

/// `mean ± z·s/√n` with `s` the sample standard deviation.
pub fn confidence_interval(values: &[f64], level: f64) -> Result<MetricSummary, ObjectiveError> {
    let n = values.len();
    if n < 2 {
        return Err(ObjectiveError::TooFew { needed: 2, got: n });
    }
    let z = z_value(level)?;
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(MetricSummary {
        mean,
        half_width: z * var.sqrt() / (n as f64).sqrt(),
        confidence_level: level,
        n_runs: n,
    })
}
