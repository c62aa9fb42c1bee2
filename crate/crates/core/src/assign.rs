//! Reverse mapping: carry cluster labels from the sampled units back to the
//! rest of the table by average similarity.

use ndarray::{ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::simgraph::{distance, DistanceMeasure};
use crate::spectral::{ClusterAssignment, Provenance};

/// Mean exp(−distance) from `point` to every row of `members`.
pub fn average_similarity(
    point: ArrayView1<f64>,
    members: ArrayView2<f64>,
    measure: DistanceMeasure,
) -> Result<f64> {
    if members.nrows() == 0 {
        return Err(Error::EmptyCluster);
    }
    let mut total = 0.0;
    for row in members.rows() {
        total += (-distance(point, row, measure)?).exp();
    }
    Ok(total / members.nrows() as f64)
}

fn mean_exp_distance(
    point: ArrayView1<f64>,
    rows: ArrayView2<f64>,
    indices: &[usize],
    measure: DistanceMeasure,
) -> Result<f64> {
    debug_assert!(!indices.is_empty());
    let mut total = 0.0;
    for &j in indices {
        total += (-distance(point, rows.row(j), measure)?).exp();
    }
    Ok(total / indices.len() as f64)
}

/// Scores for one reverse-mapped unit. `scores[c]` is the average similarity
/// to cluster c; clusters with no sampled members hold 0.0, which a real
/// score (always positive) can never take.
#[derive(Debug, Clone, Serialize)]
pub struct ReverseMapEntry {
    pub unit: usize,
    pub chosen: usize,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReverseMapReport {
    pub entries: Vec<ReverseMapEntry>,
    /// Clusters that had no sampled members and were skipped.
    pub skipped_clusters: Vec<usize>,
}

/// Extend a sampled-phase assignment to every row of `rows`.
///
/// `sample` holds the row indices that were clustered; `sampled.labels` is
/// positionally aligned with it. Sampled units keep their labels; everything
/// else goes to the cluster with the highest average similarity, ties to the
/// lowest cluster index. Running this when the sample already covers every
/// row returns the input labels untouched.
pub fn assign_remaining(
    rows: ArrayView2<f64>,
    sample: &[usize],
    sampled: &ClusterAssignment,
    measure: DistanceMeasure,
) -> Result<(ClusterAssignment, ReverseMapReport)> {
    let n = rows.nrows();
    if sample.len() != sampled.labels.len() {
        return Err(Error::LengthMismatch(sample.len(), sampled.labels.len()));
    }
    let k = sampled.k;

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut is_sampled = vec![false; n];
    for (pos, &row) in sample.iter().enumerate() {
        if row >= n {
            return Err(Error::Config(format!(
                "sample index {row} out of range for {n} rows"
            )));
        }
        members[sampled.labels[pos]].push(row);
        is_sampled[row] = true;
    }
    let skipped_clusters: Vec<usize> = (0..k).filter(|&c| members[c].is_empty()).collect();
    if skipped_clusters.len() == k {
        return Err(Error::AllClustersEmpty);
    }

    let unsampled: Vec<usize> = (0..n).filter(|&i| !is_sampled[i]).collect();
    let entries: Vec<ReverseMapEntry> = unsampled
        .par_iter()
        .map(|&unit| {
            let mut scores = vec![0.0f64; k];
            let mut chosen = usize::MAX;
            let mut best = f64::NEG_INFINITY;
            for c in 0..k {
                if members[c].is_empty() {
                    continue;
                }
                let s = mean_exp_distance(rows.row(unit), rows, &members[c], measure)?;
                scores[c] = s;
                if s > best {
                    best = s;
                    chosen = c;
                }
            }
            Ok(ReverseMapEntry { unit, chosen, scores })
        })
        .collect::<Result<_>>()?;

    let mut labels = vec![usize::MAX; n];
    let mut provenance = vec![Provenance::ReverseMapped; n];
    for (pos, &row) in sample.iter().enumerate() {
        labels[row] = sampled.labels[pos];
        provenance[row] = Provenance::Sampled;
    }
    for e in &entries {
        labels[e.unit] = e.chosen;
    }
    debug_assert!(labels.iter().all(|&l| l < k));

    Ok((
        ClusterAssignment { labels, k, provenance },
        ReverseMapReport { entries, skipped_clusters },
    ))
}
