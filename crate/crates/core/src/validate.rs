//! Silhouette validation of a full assignment.
//!
//! The default cohesion/separation score pools every point outside the own
//! cluster into a single "rest" group for b(i); the classical nearest-cluster
//! variant is kept behind the same entry point for comparison studies.

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simgraph::{distance, DistanceMeasure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SilhouetteVariant {
    /// b(i) = mean distance to all points outside the own cluster.
    #[default]
    #[serde(rename = "pooled")]
    PooledOthers,
    /// b(i) = smallest per-cluster mean distance among the other clusters.
    #[serde(rename = "classical")]
    ClassicalNearest,
}

impl SilhouetteVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            SilhouetteVariant::PooledOthers => "pooled",
            SilhouetteVariant::ClassicalNearest => "classical",
        }
    }
}

impl std::str::FromStr for SilhouetteVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled" => Ok(SilhouetteVariant::PooledOthers),
            "classical" => Ok(SilhouetteVariant::ClassicalNearest),
            _ => Err(Error::Config(format!(
                "unknown silhouette variant {s:?}; expected pooled or classical"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SilhouetteReport {
    pub variant: SilhouetteVariant,
    pub measure: DistanceMeasure,
    pub per_point: Vec<f64>,
    /// Indexed by cluster; `None` for clusters with no members.
    pub per_cluster_mean: Vec<Option<f64>>,
    pub overall_mean: f64,
    pub cluster_sizes: Vec<usize>,
    pub singleton_count: usize,
    /// Largest non-empty cluster size over the median non-empty size; the
    /// skew indicator quoted next to the score.
    pub max_over_median_size: f64,
}

/// Silhouette of `labels` over `rows` under `measure`.
///
/// Singletons get s = 1 (their a(i) is 0 by convention); a point whose a and
/// b are both 0 gets s = 0. Fails with `SingleCluster` unless at least two
/// clusters are non-empty.
pub fn silhouette(
    rows: ArrayView2<f64>,
    labels: &[usize],
    measure: DistanceMeasure,
    variant: SilhouetteVariant,
) -> Result<SilhouetteReport> {
    let n = rows.nrows();
    if labels.len() != n {
        return Err(Error::LengthMismatch(labels.len(), n));
    }
    let k = labels.iter().max().map_or(0, |&m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::SingleCluster);
    }

    let per_point: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = labels[i];
            let mut sums = vec![0.0f64; k];
            for j in 0..n {
                if j == i {
                    continue;
                }
                let d = distance(rows.row(i), rows.row(j), measure)
                    .map_err(|e| Error::AtPair { i, j, source: Box::new(e) })?;
                sums[labels[j]] += d;
            }
            let a = if sizes[own] > 1 {
                sums[own] / (sizes[own] - 1) as f64
            } else {
                0.0
            };
            let b = match variant {
                SilhouetteVariant::PooledOthers => {
                    let rest: f64 = (0..k).filter(|&c| c != own).map(|c| sums[c]).sum();
                    rest / (n - sizes[own]) as f64
                }
                SilhouetteVariant::ClassicalNearest => (0..k)
                    .filter(|&c| c != own && sizes[c] > 0)
                    .map(|c| sums[c] / sizes[c] as f64)
                    .fold(f64::INFINITY, f64::min),
            };
            let denom = a.max(b);
            Ok(if denom == 0.0 { 0.0 } else { (b - a) / denom })
        })
        .collect::<Result<_>>()?;

    let mut cluster_totals = vec![0.0f64; k];
    for (i, &l) in labels.iter().enumerate() {
        cluster_totals[l] += per_point[i];
    }
    let per_cluster_mean: Vec<Option<f64>> = (0..k)
        .map(|c| (sizes[c] > 0).then(|| cluster_totals[c] / sizes[c] as f64))
        .collect();
    let overall_mean = per_point.iter().sum::<f64>() / n as f64;

    let mut nonempty: Vec<usize> = sizes.iter().copied().filter(|&s| s > 0).collect();
    nonempty.sort_unstable();
    let median = if nonempty.len() % 2 == 1 {
        nonempty[nonempty.len() / 2] as f64
    } else {
        (nonempty[nonempty.len() / 2 - 1] + nonempty[nonempty.len() / 2]) as f64 / 2.0
    };
    let max_over_median_size = *nonempty.last().unwrap() as f64 / median;

    Ok(SilhouetteReport {
        variant,
        measure,
        singleton_count: sizes.iter().filter(|&&s| s == 1).count(),
        per_point,
        per_cluster_mean,
        overall_mean,
        cluster_sizes: sizes,
        max_over_median_size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// Straight-from-the-definition reimplementation used as the oracle.
    fn oracle_per_point(
        rows: &Array2<f64>,
        labels: &[usize],
        measure: DistanceMeasure,
        variant: SilhouetteVariant,
    ) -> Vec<f64> {
        let n = rows.nrows();
        let k = labels.iter().max().unwrap() + 1;
        let d = |i: usize, j: usize| {
            distance(rows.row(i), rows.row(j), measure).unwrap()
        };
        (0..n)
            .map(|i| {
                let own = labels[i];
                let own_members: Vec<usize> =
                    (0..n).filter(|&j| j != i && labels[j] == own).collect();
                let a = if own_members.is_empty() {
                    0.0
                } else {
                    own_members.iter().map(|&j| d(i, j)).sum::<f64>()
                        / own_members.len() as f64
                };
                let b = match variant {
                    SilhouetteVariant::PooledOthers => {
                        let others: Vec<usize> =
                            (0..n).filter(|&j| labels[j] != own).collect();
                        others.iter().map(|&j| d(i, j)).sum::<f64>() / others.len() as f64
                    }
                    SilhouetteVariant::ClassicalNearest => (0..k)
                        .filter(|&c| c != own)
                        .filter_map(|c| {
                            let members: Vec<usize> =
                                (0..n).filter(|&j| labels[j] == c).collect();
                            (!members.is_empty()).then(|| {
                                members.iter().map(|&j| d(i, j)).sum::<f64>()
                                    / members.len() as f64
                            })
                        })
                        .fold(f64::INFINITY, f64::min),
                };
                if a.max(b) == 0.0 {
                    0.0
                } else {
                    (b - a) / a.max(b)
                }
            })
            .collect()
    }

    fn random_instance(seed: u64, n: usize, k: usize) -> (Array2<f64>, Vec<usize>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Array2::<f64>::zeros((n, 3));
        for v in rows.iter_mut() {
            *v = rng.random_range(0.0..5.0);
        }
        // force every cluster non-empty, rest random
        let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        for (c, label) in labels.iter_mut().take(k).enumerate() {
            *label = c;
        }
        (rows, labels)
    }

    #[test]
    fn matches_oracle_on_many_random_instances() {
        for seed in 0..25 {
            let n = 10 + (seed as usize % 30);
            let k = 2 + (seed as usize % 4);
            let (rows, labels) = random_instance(seed, n, k);
            for variant in [
                SilhouetteVariant::PooledOthers,
                SilhouetteVariant::ClassicalNearest,
            ] {
                let report =
                    silhouette(rows.view(), &labels, DistanceMeasure::Euclidean, variant)
                        .unwrap();
                let expected =
                    oracle_per_point(&rows, &labels, DistanceMeasure::Euclidean, variant);
                for (got, want) in report.per_point.iter().zip(&expected) {
                    assert!((got - want).abs() < 1e-12, "seed {seed} {variant:?}");
                }
                let mean: f64 =
                    report.per_point.iter().sum::<f64>() / report.per_point.len() as f64;
                assert!((report.overall_mean - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singleton_cluster_scores_one() {
        let rows = array![[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [9.0, 9.0]];
        let labels = vec![0, 0, 0, 1];
        let report = silhouette(
            rows.view(),
            &labels,
            DistanceMeasure::Euclidean,
            SilhouetteVariant::PooledOthers,
        )
        .unwrap();
        assert_eq!(report.per_point[3], 1.0);
        assert_eq!(report.singleton_count, 1);
    }

    #[test]
    fn coincident_points_score_zero() {
        let rows = array![[1.0, 1.0], [1.0, 1.0], [1.0, 1.0], [1.0, 1.0]];
        let labels = vec![0, 0, 1, 1];
        let report = silhouette(
            rows.view(),
            &labels,
            DistanceMeasure::Euclidean,
            SilhouetteVariant::PooledOthers,
        )
        .unwrap();
        assert!(report.per_point.iter().all(|&s| s == 0.0));
        assert_eq!(report.overall_mean, 0.0);
    }

    #[test]
    fn one_cluster_is_an_error() {
        let rows = array![[0.0], [1.0], [2.0]];
        let err = silhouette(
            rows.view(),
            &[0, 0, 0],
            DistanceMeasure::Euclidean,
            SilhouetteVariant::PooledOthers,
        )
        .unwrap_err();
        assert!(matches!(err, Error::SingleCluster));
    }

    #[test]
    fn empty_middle_cluster_is_tolerated() {
        let rows = array![[0.0], [0.1], [5.0], [5.1]];
        let labels = vec![0, 0, 2, 2]; // cluster 1 never used
        let report = silhouette(
            rows.view(),
            &labels,
            DistanceMeasure::Euclidean,
            SilhouetteVariant::ClassicalNearest,
        )
        .unwrap();
        assert!(report.per_cluster_mean[1].is_none());
        assert_eq!(report.cluster_sizes, vec![2, 0, 2]);
        assert!(report.overall_mean > 0.9);
    }

    #[test]
    fn two_tight_blobs_score_high() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut rows = Array2::<f64>::zeros((40, 2));
        let mut labels = vec![0usize; 40];
        for i in 0..40 {
            let c = i % 2;
            labels[i] = c;
            rows[(i, 0)] = c as f64 * 20.0 + rng.random_range(-0.5..0.5);
            rows[(i, 1)] = rng.random_range(-0.5..0.5);
        }
        for variant in [
            SilhouetteVariant::PooledOthers,
            SilhouetteVariant::ClassicalNearest,
        ] {
            let report =
                silhouette(rows.view(), &labels, DistanceMeasure::Euclidean, variant).unwrap();
            assert!(report.overall_mean > 0.9, "{variant:?}: {}", report.overall_mean);
        }
    }

    #[test]
    fn shuffling_good_labels_hurts() {
        let (rows, _) = random_instance(5, 30, 2);
        // well-separated planted labels
        let mut rows = rows;
        let mut labels = vec![0usize; 30];
        for i in 15..30 {
            labels[i] = 1;
            rows[(i, 0)] += 50.0;
        }
        let good = silhouette(
            rows.view(),
            &labels,
            DistanceMeasure::Euclidean,
            SilhouetteVariant::PooledOthers,
        )
        .unwrap()
        .overall_mean;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let scrambled: Vec<usize> = (0..30).map(|_| rng.random_range(0..2)).collect();
            if scrambled.iter().all(|&l| l == scrambled[0]) {
                continue;
            }
            let worse = silhouette(
                rows.view(),
                &scrambled,
                DistanceMeasure::Euclidean,
                SilhouetteVariant::PooledOthers,
            )
            .unwrap()
            .overall_mean;
            assert!(worse < good);
        }
    }

    #[test]
    fn skew_indicator_and_histogram() {
        let mut rows = Array2::<f64>::zeros((8, 1));
        for i in 0..8 {
            rows[(i, 0)] = i as f64;
        }
        let labels = vec![0, 0, 0, 0, 0, 1, 1, 2]; // sizes 5, 2, 1
        let report = silhouette(
            rows.view(),
            &labels,
            DistanceMeasure::Euclidean,
            SilhouetteVariant::PooledOthers,
        )
        .unwrap();
        assert_eq!(report.cluster_sizes, vec![5, 2, 1]);
        assert_eq!(report.singleton_count, 1);
        assert!((report.max_over_median_size - 2.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn scores_stay_in_unit_interval(
            vals in proptest::collection::vec(0.0f64..3.0, 2 * 10),
            mut labels in proptest::collection::vec(0usize..3, 10),
        ) {
            labels[0] = 0;
            labels[1] = 1;
            let rows = Array2::from_shape_vec((10, 2), vals).unwrap();
            for variant in [SilhouetteVariant::PooledOthers, SilhouetteVariant::ClassicalNearest] {
                let report = silhouette(
                    rows.view(), &labels, DistanceMeasure::Euclidean, variant,
                ).unwrap();
                for &s in &report.per_point {
                    prop_assert!((-1.0..=1.0).contains(&s));
                }
                prop_assert!((-1.0..=1.0).contains(&report.overall_mean));
            }
        }

        #[test]
        fn permuting_rows_permutes_scores(
            vals in proptest::collection::vec(0.0f64..3.0, 2 * 8),
            mut labels in proptest::collection::vec(0usize..2, 8),
        ) {
            labels[0] = 0;
            labels[1] = 1;
            let rows = Array2::from_shape_vec((8, 2), vals).unwrap();
            let base = silhouette(
                rows.view(), &labels, DistanceMeasure::CityBlock,
                SilhouetteVariant::PooledOthers,
            ).unwrap();
            // reverse as the permutation
            let perm: Vec<usize> = (0..8).rev().collect();
            let mut prows = Array2::<f64>::zeros((8, 2));
            let mut plabels = vec![0usize; 8];
            for (new, &old) in perm.iter().enumerate() {
                prows.row_mut(new).assign(&rows.row(old));
                plabels[new] = labels[old];
            }
            let permuted = silhouette(
                prows.view(), &plabels, DistanceMeasure::CityBlock,
                SilhouetteVariant::PooledOthers,
            ).unwrap();
            for (new, &old) in perm.iter().enumerate() {
                prop_assert!((permuted.per_point[new] - base.per_point[old]).abs() < 1e-12);
            }
        }
    }
}
