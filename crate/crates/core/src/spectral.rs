//! Graph Laplacians, their smallest eigenpairs, eigengap model selection,
//! and k-means over the spectral embedding.
//!
//! Three Laplacian variants share one eigensolver. The random-walk variant
//! (type3) is non-symmetric, so its eigenpairs come from the equivalent
//! symmetric generalized problem (D−W)u = λDu: substituting u = D^(−1/2) y
//! turns it into the type2 problem for y, which is why type2 and type3 share
//! a spectrum and differ only by the D^(−1/2) map on eigenvectors.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simgraph::SimilarityMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianKind {
    Type1,
    Type2,
    Type3,
}

impl LaplacianKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LaplacianKind::Type1 => "type1",
            LaplacianKind::Type2 => "type2",
            LaplacianKind::Type3 => "type3",
        }
    }
}

impl std::str::FromStr for LaplacianKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "type1" => Ok(LaplacianKind::Type1),
            "type2" => Ok(LaplacianKind::Type2),
            "type3" => Ok(LaplacianKind::Type3),
            _ => Err(Error::Config(format!(
                "unknown laplacian kind {s:?}; expected type1, type2 or type3"
            ))),
        }
    }
}

impl std::fmt::Display for LaplacianKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct Laplacian {
    pub kind: LaplacianKind,
    pub matrix: Array2<f64>,
    pub degrees: Array1<f64>,
}

/// Ascending eigenvalues with their unit-norm eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    pub eigenvalues: Vec<f64>,
    pub vectors: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Sampled,
    ReverseMapped,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Sampled => "sampled",
            Provenance::ReverseMapped => "reverse_mapped",
        }
    }
}

/// Cluster labels over a set of units, with per-unit provenance.
#[derive(Debug, Clone)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
    pub provenance: Vec<Provenance>,
}

impl ClusterAssignment {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn empty_clusters(&self) -> Vec<usize> {
        self.cluster_sizes()
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 0)
            .map(|(c, _)| c)
            .collect()
    }
}

/// Assemble the requested Laplacian from a similarity matrix.
/// Degrees are the row sums of W; positive entries make D invertible.
pub fn laplacian(w: &SimilarityMatrix, kind: LaplacianKind) -> Laplacian {
    let n = w.n();
    let degrees: Array1<f64> = Array1::from_iter(w.values.rows().into_iter().map(|r| r.sum()));
    let mut matrix = Array2::<f64>::zeros((n, n));
    match kind {
        LaplacianKind::Type1 => {
            for i in 0..n {
                for j in 0..n {
                    matrix[(i, j)] = if i == j {
                        degrees[i] - w.values[(i, j)]
                    } else {
                        -w.values[(i, j)]
                    };
                }
            }
        }
        LaplacianKind::Type2 => {
            // fill the lower triangle and mirror so symmetry is exact
            let inv_sqrt: Vec<f64> = degrees.iter().map(|&d| 1.0 / d.sqrt()).collect();
            for i in 0..n {
                for j in 0..=i {
                    let v = -inv_sqrt[i] * w.values[(i, j)] * inv_sqrt[j];
                    matrix[(i, j)] = v;
                    matrix[(j, i)] = v;
                }
                matrix[(i, i)] += 1.0;
            }
        }
        LaplacianKind::Type3 => {
            for i in 0..n {
                for j in 0..n {
                    matrix[(i, j)] = -w.values[(i, j)] / degrees[i];
                }
                matrix[(i, i)] += 1.0;
            }
        }
    }
    Laplacian { kind, matrix, degrees }
}

/// Smallest `count` eigenpairs, eigenvalues ascending, vectors unit-norm.
///
/// type1 and type2 are symmetric and solved directly. type3 goes through the
/// generalized problem described in the module docs; its eigenvectors are the
/// back-transformed ones, re-normalized.
pub fn smallest_eigenpairs(lap: &Laplacian, count: usize) -> Result<SpectralEmbedding> {
    let n = lap.matrix.nrows();
    if count < 1 || count > n {
        return Err(Error::Config(format!(
            "eigenpair count {count} outside [1, {n}]"
        )));
    }

    let sym = match lap.kind {
        LaplacianKind::Type1 | LaplacianKind::Type2 => lap.matrix.clone(),
        LaplacianKind::Type3 => {
            // D^(1/2) L_rw D^(-1/2) = L_sym, assembled symmetrically
            let inv_sqrt: Vec<f64> = lap.degrees.iter().map(|&d| 1.0 / d.sqrt()).collect();
            let mut b = Array2::<f64>::zeros((n, n));
            for i in 0..n {
                for j in 0..=i {
                    // lap.matrix[(i,j)] = δ_ij − w_ij/d_i; recover w_ij = d_i(δ_ij − l_ij)
                    let w_ij = lap.degrees[i] * (f64::from(i == j) - lap.matrix[(i, j)]);
                    let v = f64::from(i == j) - inv_sqrt[i] * w_ij * inv_sqrt[j];
                    b[(i, j)] = v;
                    b[(j, i)] = v;
                }
            }
            b
        }
    };

    let dm = DMatrix::from_fn(n, n, |i, j| sym[(i, j)]);
    let eig = nalgebra::linalg::SymmetricEigen::try_new(dm, f64::EPSILON, 50 * n.max(100))
        .ok_or(Error::EigenFailed { kind: lap.kind.as_str(), size: n })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap()
            .then(a.cmp(&b))
    });

    let eigenvalues: Vec<f64> = order[..count].iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Array2::<f64>::zeros((n, count));
    for (col, &src) in order[..count].iter().enumerate() {
        for row in 0..n {
            vectors[(row, col)] = eig.eigenvectors[(row, src)];
        }
    }

    if lap.kind == LaplacianKind::Type3 {
        // back-transform u = D^(-1/2) y and renormalize
        for col in 0..count {
            let mut norm2 = 0.0;
            for row in 0..n {
                vectors[(row, col)] /= lap.degrees[row].sqrt();
                norm2 += vectors[(row, col)] * vectors[(row, col)];
            }
            let norm = norm2.sqrt();
            if norm > 0.0 {
                for row in 0..n {
                    vectors[(row, col)] /= norm;
                }
            }
        }
    }

    Ok(SpectralEmbedding { eigenvalues, vectors })
}

/// Pick k at the largest consecutive eigenvalue gap: the returned k maximizes
/// λ_{k+1} − λ_k over k ∈ [1, k_max). Gaps within 1e-12 of the running best
/// count as ties and keep the smaller k.
pub fn eigengap_estimate_k(eigenvalues: &[f64], k_max: usize) -> Result<usize> {
    if eigenvalues.len() < 2 {
        return Err(Error::TooFewEigenvalues { need: 2, have: eigenvalues.len() });
    }
    if k_max < 2 || eigenvalues.len() < k_max {
        return Err(Error::TooFewEigenvalues { need: k_max.max(2), have: eigenvalues.len() });
    }
    let mut best_k = 1;
    let mut best_gap = f64::NEG_INFINITY;
    for k in 1..k_max {
        let gap = eigenvalues[k] - eigenvalues[k - 1];
        if gap > best_gap + 1e-12 {
            best_gap = gap;
            best_k = k;
        }
    }
    Ok(best_k)
}

pub(crate) struct KmeansFit {
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    #[allow(dead_code)]
    pub wcss: f64,
}

const KMEANS_TOL: f64 = 1e-8;
const KMEANS_MAX_ITERS: usize = 300;
pub const DEFAULT_RESTARTS: usize = 10;

/// Lloyd's algorithm from k-means++ seeding, best of `restarts` by
/// within-cluster sum of squares. Assignment ties go to the lowest centroid
/// index and centroid sums accumulate in row order, so results do not depend
/// on the worker count.
pub(crate) fn kmeans_fit(
    rows: ArrayView2<f64>,
    k: usize,
    rng: &mut impl Rng,
    restarts: usize,
) -> Result<KmeansFit> {
    let n = rows.nrows();
    if k > n {
        return Err(Error::TooManyClusters { k, n });
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }

    let mut best: Option<KmeansFit> = None;
    for _ in 0..restarts.max(1) {
        let fit = kmeans_once(rows, k, rng);
        match &best {
            Some(b) if b.wcss <= fit.wcss => {}
            _ => best = Some(fit),
        }
    }
    Ok(best.expect("at least one restart"))
}

fn kmeans_once(rows: ArrayView2<f64>, k: usize, rng: &mut impl Rng) -> KmeansFit {
    let (n, m) = (rows.nrows(), rows.ncols());
    let mut centroids = Array2::<f64>::zeros((k, m));

    // k-means++: D² sampling after a uniform first pick
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&rows.row(first));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| squared_distance(rows, i, centroids.view(), 0))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&rows.row(pick));
        for (i, best) in d2.iter_mut().enumerate() {
            let d = squared_distance(rows, i, centroids.view(), c);
            if d < *best {
                *best = d;
            }
        }
    }

    let mut labels = vec![0usize; n];
    for _ in 0..KMEANS_MAX_ITERS {
        assign_rows(rows, centroids.view(), &mut labels);

        let mut sums = Array2::<f64>::zeros((k, m));
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for j in 0..m {
                sums[(labels[i], j)] += rows[(i, j)];
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue; // empty cluster keeps its centroid
            }
            let mut delta2 = 0.0;
            for j in 0..m {
                let new = sums[(c, j)] / counts[c] as f64;
                let d = new - centroids[(c, j)];
                delta2 += d * d;
                centroids[(c, j)] = new;
            }
            shift = shift.max(delta2.sqrt());
        }
        if shift < KMEANS_TOL {
            break;
        }
    }
    assign_rows(rows, centroids.view(), &mut labels);

    let wcss = (0..n)
        .map(|i| squared_distance(rows, i, centroids.view(), labels[i]))
        .sum();
    KmeansFit { labels, centroids, wcss }
}

fn assign_rows(rows: ArrayView2<f64>, centroids: ArrayView2<f64>, labels: &mut [usize]) {
    let k = centroids.nrows();
    let new: Vec<usize> = (0..rows.nrows())
        .into_par_iter()
        .map(|i| {
            let mut best = 0usize;
            let mut best_d = squared_distance(rows, i, centroids, 0);
            for c in 1..k {
                let d = squared_distance(rows, i, centroids, c);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect();
    labels.copy_from_slice(&new);
}

fn squared_distance(rows: ArrayView2<f64>, i: usize, centroids: ArrayView2<f64>, c: usize) -> f64 {
    let mut acc = 0.0;
    for j in 0..rows.ncols() {
        let d = rows[(i, j)] - centroids[(c, j)];
        acc += d * d;
    }
    acc
}

/// Cluster rows with k-means (k-means++ seeding, `DEFAULT_RESTARTS` restarts).
pub fn kmeans(rows: ArrayView2<f64>, k: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    Ok(kmeans_fit(rows, k, rng, DEFAULT_RESTARTS)?.labels)
}

/// Options for `spectral_cluster_opts`; `Default` matches the plain pipeline.
#[derive(Debug, Clone, Copy)]
pub struct SpectralOptions {
    pub restarts: usize,
    /// Normalize embedding rows to unit length before k-means.
    pub row_normalize: bool,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions { restarts: DEFAULT_RESTARTS, row_normalize: false }
    }
}

/// Laplacian → smallest k eigenvectors → k-means on the embedding rows.
pub fn spectral_cluster(
    w: &SimilarityMatrix,
    k: usize,
    kind: LaplacianKind,
    rng: &mut impl Rng,
) -> Result<ClusterAssignment> {
    spectral_cluster_opts(w, k, kind, rng, SpectralOptions::default())
}

pub fn spectral_cluster_opts(
    w: &SimilarityMatrix,
    k: usize,
    kind: LaplacianKind,
    rng: &mut impl Rng,
    opts: SpectralOptions,
) -> Result<ClusterAssignment> {
    let n = w.n();
    if k > n {
        return Err(Error::TooManyClusters { k, n });
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if k == 1 {
        return Ok(ClusterAssignment {
            labels: vec![0; n],
            k: 1,
            provenance: vec![Provenance::Sampled; n],
        });
    }

    let lap = laplacian(w, kind);
    let embedding = smallest_eigenpairs(&lap, k)?;
    let mut rows = embedding.vectors;
    if opts.row_normalize {
        for mut row in rows.rows_mut() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.mapv_inplace(|v| v / norm);
            }
        }
    }
    let labels = kmeans_fit(rows.view(), k, rng, opts.restarts)?.labels;
    Ok(ClusterAssignment { labels, k, provenance: vec![Provenance::Sampled; n] })
}
