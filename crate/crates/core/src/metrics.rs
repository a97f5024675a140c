//! Ranking metrics: global AUC, per-request NDCG@K and MAP.
//!
//! Conventions, fixed here and covered by tests because they change the
//! numbers:
//! - AUC uses the strict indicator I(score_pos > score_neg); ties count 0.
//! - Ranking sorts by score descending with ties broken by original index
//!   ascending (stable sort order).
//! - Groups without a positive are skipped for NDCG/MAP and reported in a
//!   skip counter; AUC is global over all instances.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::math;

/// All scored candidates of one serving request.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RequestGroup {
    pub request_id: u64,
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

impl RequestGroup {
    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    /// Indices sorted by score descending, ties by original index ascending.
    fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| {
            self.scores[b].partial_cmp(&self.scores[a]).unwrap_or(core::cmp::Ordering::Equal)
        });
        idx
    }
}

/// Global pairwise AUC with the strict-inequality tie convention, computed
/// in O(n log n) by sorting and counting negatives strictly below each
/// positive. Integer pair counts keep it exactly equal to the brute-force
/// double loop.
pub fn auc_global(scores: &[f64], labels: &[u8]) -> Result<f64, CoreError> {
    assert_eq!(scores.len(), labels.len(), "scores/labels length mismatch");
    let pos = labels.iter().filter(|&&l| l == 1).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(CoreError::UndefinedMetric(String::from(
            "AUC needs at least one positive and one negative",
        )));
    }

    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(core::cmp::Ordering::Equal));

    let mut hits = 0u64; // pairs with score_pos > score_neg
    let mut negatives_below = 0u64;
    let mut i = 0;
    while i < idx.len() {
        // walk one tie group
        let mut j = i;
        let mut group_pos = 0u64;
        let mut group_neg = 0u64;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            if labels[idx[j]] == 1 {
                group_pos += 1;
            } else {
                group_neg += 1;
            }
            j += 1;
        }
        hits += group_pos * negatives_below;
        negatives_below += group_neg;
        i = j;
    }
    Ok(hits as f64 / (pos * neg) as f64)
}

/// DCG over a ranked binary-relevance list: sum of (2^r - 1) / log2(rank+1).
pub fn dcg_at_k(ranked_labels: &[u8], k: usize) -> f64 {
    ranked_labels
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &r)| (math::powi(2.0, r as i32) - 1.0) / math::log2((i + 2) as f64))
        .sum()
}

/// NDCG@K for one request; `None` when the group has no positive (IDCG is
/// undefined). `k = None` scores the full list.
pub fn ndcg_at_k(group: &RequestGroup, k: Option<usize>) -> Option<f64> {
    let positives = group.positives();
    if positives == 0 {
        return None;
    }
    let k = k.unwrap_or(group.scores.len()).min(group.scores.len());
    let ranked: Vec<u8> = group.ranking().iter().map(|&i| group.labels[i]).collect();
    let mut ideal = ranked.clone();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg_at_k(&ideal, k);
    if idcg == 0.0 {
        // all positives fall outside the ideal top-k only when k == 0
        return Some(0.0);
    }
    Some(dcg_at_k(&ranked, k) / idcg)
}

/// Average precision over the full ranked list; `None` without a positive.
pub fn average_precision(group: &RequestGroup) -> Option<f64> {
    let positives = group.positives();
    if positives == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in group.ranking().iter().enumerate() {
        if group.labels[i] == 1 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / positives as f64)
}

/// Aggregate report: global AUC plus NDCG/MAP means over scoreable groups.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub auc: f64,
    pub ndcg: f64,
    pub map: f64,
    pub groups_scored: usize,
    pub groups_skipped: usize,
    pub instances: usize,
}

pub fn evaluate(groups: &[RequestGroup], k: Option<usize>) -> Result<MetricsReport, CoreError> {
    let mut all_scores = Vec::new();
    let mut all_labels = Vec::new();
    let mut ndcg_sum = 0.0;
    let mut map_sum = 0.0;
    let mut scored = 0usize;
    let mut skipped = 0usize;

    for group in groups {
        all_scores.extend_from_slice(&group.scores);
        all_labels.extend_from_slice(&group.labels);
        match (ndcg_at_k(group, k), average_precision(group)) {
            (Some(n), Some(a)) => {
                ndcg_sum += n;
                map_sum += a;
                scored += 1;
            }
            _ => skipped += 1,
        }
    }
    if scored == 0 {
        return Err(CoreError::UndefinedMetric(String::from(
            "no request group contains a positive",
        )));
    }
    let auc = auc_global(&all_scores, &all_labels)?;
    Ok(MetricsReport {
        auc,
        ndcg: ndcg_sum / scored as f64,
        map: map_sum / scored as f64,
        groups_scored: scored,
        groups_skipped: skipped,
        instances: all_scores.len(),
    })
}

/// Bucket (request_id, score, label) triples into groups, ordered by
/// request id for determinism.
pub fn group_by_request(rows: &[(u64, f64, u8)]) -> Vec<RequestGroup> {
    let mut map: BTreeMap<u64, RequestGroup> = BTreeMap::new();
    for &(request_id, score, label) in rows {
        let group = map
            .entry(request_id)
            .or_insert_with(|| RequestGroup { request_id, scores: Vec::new(), labels: Vec::new() });
        group.scores.push(score);
        group.labels.push(label);
    }
    map.into_values().collect()
}
