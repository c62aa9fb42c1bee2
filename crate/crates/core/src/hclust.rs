//! Agglomerative hierarchical clustering baseline over raw distances.
//!
//! The default path is the plain Lance-Williams matrix algorithm: find the
//! closest active pair, merge, update one row, repeat. A nearest-neighbor
//! chain variant is available for callers that want the O(N²) schedule; both
//! produce the same dendrogram on distinct distances.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simgraph::{distance_matrix, DistanceMeasure};
use crate::spectral::{ClusterAssignment, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkageSpec {
    Single,
    Complete,
    Average,
    Ward,
}

impl LinkageSpec {
    pub fn as_str(&self) -> &'static str {
        match self {
            LinkageSpec::Single => "single",
            LinkageSpec::Complete => "complete",
            LinkageSpec::Average => "average",
            LinkageSpec::Ward => "ward",
        }
    }
}

impl std::str::FromStr for LinkageSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(LinkageSpec::Single),
            "complete" => Ok(LinkageSpec::Complete),
            "average" => Ok(LinkageSpec::Average),
            "ward" => Ok(LinkageSpec::Ward),
            _ => Err(Error::Config(format!(
                "unknown linkage {s:?}; expected single, complete, average or ward"
            ))),
        }
    }
}

impl std::fmt::Display for LinkageSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HclustAlgorithm {
    #[default]
    Naive,
    NnChain,
}

impl std::str::FromStr for HclustAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(HclustAlgorithm::Naive),
            "nn_chain" => Ok(HclustAlgorithm::NnChain),
            _ => Err(Error::Config(format!(
                "unknown agglomeration algorithm {s:?}; expected naive or nn_chain"
            ))),
        }
    }
}

/// One agglomeration event. Leaves are clusters 0..N-1; the merge at `step`
/// creates cluster N+step. `a` < `b` always.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MergeStep {
    pub step: usize,
    pub a: usize,
    pub b: usize,
    pub height: f64,
}

/// Agglomerate rows under the given measure and linkage, cutting at k.
pub fn hierarchical_cluster(
    rows: ArrayView2<f64>,
    measure: DistanceMeasure,
    linkage: LinkageSpec,
    k: usize,
) -> Result<ClusterAssignment> {
    hierarchical_cluster_opts(rows, measure, linkage, k, HclustAlgorithm::Naive)
        .map(|(assignment, _)| assignment)
}

pub fn hierarchical_cluster_opts(
    rows: ArrayView2<f64>,
    measure: DistanceMeasure,
    linkage: LinkageSpec,
    k: usize,
    algorithm: HclustAlgorithm,
) -> Result<(ClusterAssignment, Vec<MergeStep>)> {
    let d = distance_matrix(rows, measure)?;
    if linkage == LinkageSpec::Ward && measure != DistanceMeasure::SquaredEuclidean {
        return Err(Error::Config(format!(
            "ward linkage requires squared_euclidean geometry, got {measure}"
        )));
    }
    hierarchical_cluster_precomputed(&d, linkage, k, algorithm)
}

/// Same as `hierarchical_cluster_opts` but over an already-built distance
/// matrix (symmetric, zero diagonal).
pub fn hierarchical_cluster_precomputed(
    d: &Array2<f64>,
    linkage: LinkageSpec,
    k: usize,
    algorithm: HclustAlgorithm,
) -> Result<(ClusterAssignment, Vec<MergeStep>)> {
    let n = d.nrows();
    if k < 1 || k > n {
        return Err(Error::TooManyClusters { k, n });
    }

    let merges = match algorithm {
        HclustAlgorithm::Naive => agglomerate_naive(d.clone(), linkage),
        HclustAlgorithm::NnChain => agglomerate_nn_chain(d.clone(), linkage),
    };

    let labels = cut(&merges, n, k);
    let assignment = ClusterAssignment {
        labels,
        k,
        provenance: vec![Provenance::Sampled; n],
    };
    Ok((assignment, merges[..n - k].to_vec()))
}

/// Lance-Williams update for the distance from the merge of (i, j) to l.
fn lance_williams(
    linkage: LinkageSpec,
    d_il: f64,
    d_jl: f64,
    d_ij: f64,
    n_i: f64,
    n_j: f64,
    n_l: f64,
) -> f64 {
    match linkage {
        LinkageSpec::Single => 0.5 * d_il + 0.5 * d_jl - 0.5 * (d_il - d_jl).abs(),
        LinkageSpec::Complete => 0.5 * d_il + 0.5 * d_jl + 0.5 * (d_il - d_jl).abs(),
        LinkageSpec::Average => (n_i * d_il + n_j * d_jl) / (n_i + n_j),
        LinkageSpec::Ward => {
            let t = n_i + n_j + n_l;
            ((n_i + n_l) * d_il + (n_j + n_l) * d_jl - n_l * d_ij) / t
        }
    }
}

/// Full merge sequence by repeated global-minimum scans. Ties resolve to the
/// lexicographically smallest active slot pair, so the result is unique.
fn agglomerate_naive(mut d: Array2<f64>, linkage: LinkageSpec) -> Vec<MergeStep> {
    let n = d.nrows();
    let mut active: Vec<usize> = (0..n).collect();
    let mut sizes = vec![1.0f64; n];
    let mut ids: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    for step in 0..n.saturating_sub(1) {
        let mut best: Option<(f64, usize, usize)> = None;
        for (ai, &i) in active.iter().enumerate() {
            for &j in &active[ai + 1..] {
                let dist = d[(i, j)];
                if best.is_none_or(|(bd, _, _)| dist < bd) {
                    best = Some((dist, i, j));
                }
            }
        }
        let (height, i, j) = best.expect("at least two active clusters");

        for &l in &active {
            if l == i || l == j {
                continue;
            }
            let updated = lance_williams(
                linkage,
                d[(i, l)],
                d[(j, l)],
                d[(i, j)],
                sizes[i],
                sizes[j],
                sizes[l],
            );
            d[(i, l)] = updated;
            d[(l, i)] = updated;
        }

        let (a, b) = (ids[i].min(ids[j]), ids[i].max(ids[j]));
        merges.push(MergeStep { step, a, b, height });
        sizes[i] += sizes[j];
        ids[i] = n + step;
        active.retain(|&x| x != j);
    }
    merges
}

/// Nearest-neighbor-chain schedule: follow nearest neighbors until a mutual
/// pair appears, merge it, continue from the chain remainder. Merges come out
/// of height order, so they are sorted before use.
fn agglomerate_nn_chain(mut d: Array2<f64>, linkage: LinkageSpec) -> Vec<MergeStep> {
    let n = d.nrows();
    let mut alive = vec![true; n];
    let mut sizes = vec![1.0f64; n];
    let mut ids: Vec<usize> = (0..n).collect();
    let mut chain: Vec<usize> = Vec::with_capacity(n);
    let mut raw: Vec<(f64, usize, usize)> = Vec::with_capacity(n.saturating_sub(1));

    for _ in 0..n.saturating_sub(1) {
        if chain.is_empty() {
            let start = alive.iter().position(|&a| a).expect("clusters remain");
            chain.push(start);
        }
        loop {
            let tip = *chain.last().unwrap();
            let mut nearest = usize::MAX;
            let mut nearest_d = f64::INFINITY;
            for l in 0..n {
                if !alive[l] || l == tip {
                    continue;
                }
                if d[(tip, l)] < nearest_d {
                    nearest_d = d[(tip, l)];
                    nearest = l;
                }
            }
            let prev = if chain.len() >= 2 { Some(chain[chain.len() - 2]) } else { None };
            // prefer the chain predecessor on equal distance: reciprocity check
            if prev == Some(nearest) || prev.is_some_and(|p| d[(tip, p)] <= nearest_d) {
                let p = prev.unwrap();
                chain.pop();
                chain.pop();
                let height = d[(tip, p)];
                let (i, j) = (tip.min(p), tip.max(p));
                for l in 0..n {
                    if !alive[l] || l == i || l == j {
                        continue;
                    }
                    let updated = lance_williams(
                        linkage,
                        d[(i, l)],
                        d[(j, l)],
                        d[(i, j)],
                        sizes[i],
                        sizes[j],
                        sizes[l],
                    );
                    d[(i, l)] = updated;
                    d[(l, i)] = updated;
                }
                raw.push((height, ids[i].min(ids[j]), ids[i].max(ids[j])));
                sizes[i] += sizes[j];
                ids[i] = n + raw.len() - 1; // provisional; renumbered after sorting
                alive[j] = false;
                break;
            }
            chain.push(nearest);
        }
    }

    // renumber merges in height order so cuts behave like the naive schedule
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&x, &y| raw[x].0.partial_cmp(&raw[y].0).unwrap().then(x.cmp(&y)));
    let mut renumber = vec![0usize; raw.len()];
    for (new_pos, &old_pos) in order.iter().enumerate() {
        renumber[old_pos] = new_pos;
    }
    let remap = |id: usize| if id < n { id } else { n + renumber[id - n] };
    order
        .iter()
        .enumerate()
        .map(|(step, &old)| {
            let (height, a, b) = raw[old];
            let (ra, rb) = (remap(a), remap(b));
            MergeStep { step, a: ra.min(rb), b: ra.max(rb), height }
        })
        .collect()
}

/// Apply the first n−k merges and label the surviving clusters 0..k-1 in
/// order of their smallest member.
fn cut(merges: &[MergeStep], n: usize, k: usize) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut root = x;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = x;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for merge in &merges[..n - k] {
        let node = n + merge.step;
        let ra = find(&mut parent, merge.a);
        let rb = find(&mut parent, merge.b);
        parent[ra] = node;
        parent[rb] = node;
    }

    let mut label_of_root: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    let mut labels = vec![0usize; n];
    for (leaf, slot) in labels.iter_mut().enumerate() {
        let root = find(&mut parent, leaf);
        let next = label_of_root.len();
        *slot = *label_of_root.entry(root).or_insert(next);
    }
    labels
}
