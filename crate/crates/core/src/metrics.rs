//! Threshold-free ranking metrics over scored edges.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredEdges {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl ScoredEdges {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::shape(format!(
                "{} scores for {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::NonFinite("edge scores".into()));
        }
        Ok(ScoredEdges { scores, labels })
    }

    /// Positives first, then negatives.
    pub fn from_pos_neg(pos: &[f64], neg: &[f64]) -> Result<Self> {
        let scores = pos.iter().chain(neg).copied().collect();
        let labels = std::iter::repeat_n(true, pos.len())
            .chain(std::iter::repeat_n(false, neg.len()))
            .collect();
        ScoredEdges::new(scores, labels)
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn num_positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

/// Area under the ROC curve via the Mann–Whitney rank sum; ties count 1/2.
pub fn auc(s: &ScoredEdges) -> Result<f64> {
    let pos = s.num_positives();
    let neg = s.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid(format!(
            "AUC needs both classes ({pos} positives, {neg} negatives)"
        )));
    }
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s.scores[a].total_cmp(&s.scores[b]));

    // Sum of (1-based, tie-averaged) ranks of the positives, kept doubled so
    // every term is an integer.
    let mut doubled_rank_sum = 0u128;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && s.scores[order[j + 1]] == s.scores[order[i]] {
            j += 1;
        }
        let doubled_rank = (i + 1 + j + 1) as u128;
        let tied_pos = order[i..=j].iter().filter(|&&k| s.labels[k]).count() as u128;
        doubled_rank_sum += doubled_rank * tied_pos;
        i = j + 1;
    }
    let (p, n) = (pos as u128, neg as u128);
    let doubled_u = doubled_rank_sum - p * (p + 1);
    Ok(doubled_u as f64 / (2 * p * n) as f64)
}

/// Priority used to break score ties in [`average_precision`]: among equal
/// scores, lower priority ranks first.
pub fn tie_break_priority(len: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..len).collect();
    perm.shuffle(&mut stream_rng(seed, Stream::TieBreak));
    let mut priority = vec![0; len];
    for (rank, &idx) in perm.iter().enumerate() {
        priority[idx] = rank;
    }
    priority
}

/// Average precision `Σ_k (R_k − R_{k−1}) · P_k` over the descending-score
/// ranking, with ties ordered by a seeded shuffle.
pub fn average_precision(s: &ScoredEdges, tie_seed: u64) -> Result<f64> {
    let pos = s.num_positives();
    if pos == 0 {
        return Err(Error::invalid(
            "average precision needs at least one positive",
        ));
    }
    let priority = tie_break_priority(s.len(), tie_seed);
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| {
        s.scores[b]
            .total_cmp(&s.scores[a])
            .then(priority[a].cmp(&priority[b]))
    });
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &idx) in order.iter().enumerate() {
        if s.labels[idx] {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / pos as f64)
}

/// Mean and sample standard deviation across folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldStats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
    /// Set when a single value makes the standard deviation undefined (reported as 0).
    pub degenerate: bool,
}

pub fn fold_stats(values: &[f64]) -> Result<FoldStats> {
    if values.is_empty() {
        return Err(Error::invalid("fold statistics of an empty list"));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(FoldStats {
            mean,
            std: 0.0,
            count: 1,
            degenerate: true,
        });
    }
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    Ok(FoldStats {
        mean,
        std: var.sqrt(),
        count: n,
        degenerate: false,
    })
}

/// `93.61 ± 1.82` style, as percentages.
pub fn format_pct(stats: &FoldStats) -> String {
    format!("{:.2} ± {:.2}", 100.0 * stats.mean, 100.0 * stats.std)
}
