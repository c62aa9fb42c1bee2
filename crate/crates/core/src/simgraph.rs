//! Pairwise distances under seven measures and the fully connected
//! exp-similarity matrix w_ij = e^(−d_ij) built from them.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard ceiling on matrix size; keeps memory at a predictable O(N²).
pub const DEFAULT_MATRIX_CAP: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMeasure {
    CityBlock,
    Euclidean,
    SquaredEuclidean,
    Cosine,
    Correlation,
    Hamming,
    Jaccard,
}

impl DistanceMeasure {
    pub const ALL: [DistanceMeasure; 7] = [
        DistanceMeasure::CityBlock,
        DistanceMeasure::Euclidean,
        DistanceMeasure::SquaredEuclidean,
        DistanceMeasure::Cosine,
        DistanceMeasure::Correlation,
        DistanceMeasure::Hamming,
        DistanceMeasure::Jaccard,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DistanceMeasure::CityBlock => "city_block",
            DistanceMeasure::Euclidean => "euclidean",
            DistanceMeasure::SquaredEuclidean => "squared_euclidean",
            DistanceMeasure::Cosine => "cosine",
            DistanceMeasure::Correlation => "correlation",
            DistanceMeasure::Hamming => "hamming",
            DistanceMeasure::Jaccard => "jaccard",
        }
    }
}

impl std::str::FromStr for DistanceMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DistanceMeasure::ALL
            .iter()
            .find(|m| m.as_str() == s)
            .copied()
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown distance measure {s:?}; expected one of {}",
                    DistanceMeasure::ALL.map(|m| m.as_str()).join(", ")
                ))
            })
    }
}

impl std::fmt::Display for DistanceMeasure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Distance between two equal-length vectors under the chosen measure.
///
/// Hamming counts disagreeing positions and divides by the vector length m.
/// Jaccard counts disagreements over the support union (positions where at
/// least one entry is nonzero); an empty union yields 0. Both compare floats
/// exactly, which is chiefly meaningful for encoded categorical traits.
pub fn distance(a: ArrayView1<f64>, b: ArrayView1<f64>, measure: DistanceMeasure) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let m = a.len();
    let d = match measure {
        DistanceMeasure::CityBlock => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        DistanceMeasure::Euclidean => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
        DistanceMeasure::SquaredEuclidean => {
            a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
        }
        DistanceMeasure::Cosine => {
            let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
            for (x, y) in a.iter().zip(b) {
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
            if na == 0.0 || nb == 0.0 {
                return Err(Error::ZeroVector);
            }
            1.0 - dot / (na.sqrt() * nb.sqrt())
        }
        DistanceMeasure::Correlation => {
            let ma = a.sum() / m as f64;
            let mb = b.sum() / m as f64;
            let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
            for (x, y) in a.iter().zip(b) {
                let (cx, cy) = (x - ma, y - mb);
                dot += cx * cy;
                na += cx * cx;
                nb += cy * cy;
            }
            if na == 0.0 || nb == 0.0 {
                return Err(Error::ConstantVector);
            }
            1.0 - dot / (na.sqrt() * nb.sqrt())
        }
        DistanceMeasure::Hamming => {
            a.iter().zip(b).filter(|(x, y)| x != y).count() as f64 / m as f64
        }
        DistanceMeasure::Jaccard => {
            let union = a
                .iter()
                .zip(b)
                .filter(|(x, y)| **x != 0.0 || **y != 0.0)
                .count();
            if union == 0 {
                0.0
            } else {
                a.iter().zip(b).filter(|(x, y)| x != y).count() as f64 / union as f64
            }
        }
    };
    // cosine/correlation can dip below zero by rounding; distances are nonnegative
    Ok(d.max(0.0))
}

/// Dense symmetric similarity matrix over a fully connected graph.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    pub values: Array2<f64>,
    pub measure: DistanceMeasure,
}

impl SimilarityMatrix {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}

/// All pairwise distances as a dense symmetric matrix with zero diagonal.
///
/// Rows are processed in parallel but every entry is computed independently,
/// so the result is bit-identical regardless of thread count.
pub fn distance_matrix(rows: ArrayView2<f64>, measure: DistanceMeasure) -> Result<Array2<f64>> {
    let n = rows.nrows();
    if n < 2 {
        return Err(Error::TooFewUnits);
    }
    let lower: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..i)
                .map(|j| {
                    distance(rows.row(i), rows.row(j), measure)
                        .map_err(|e| Error::AtPair { i, j, source: Box::new(e) })
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;

    let mut d = Array2::<f64>::zeros((n, n));
    for (i, row) in lower.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    Ok(d)
}

/// Build w_ij = exp(−d_ij) with a unit diagonal, bounded by `DEFAULT_MATRIX_CAP`.
pub fn similarity_matrix(
    rows: ArrayView2<f64>,
    measure: DistanceMeasure,
) -> Result<SimilarityMatrix> {
    similarity_matrix_capped(rows, measure, DEFAULT_MATRIX_CAP)
}

pub fn similarity_matrix_capped(
    rows: ArrayView2<f64>,
    measure: DistanceMeasure,
    cap: usize,
) -> Result<SimilarityMatrix> {
    let n = rows.nrows();
    if n > cap {
        return Err(Error::Config(format!(
            "similarity matrix over {n} rows exceeds the cap of {cap}"
        )));
    }
    let mut values = distance_matrix(rows, measure)?;
    values.mapv_inplace(|d| (-d).exp());
    for i in 0..n {
        values[(i, i)] = 1.0;
    }
    Ok(SimilarityMatrix { values, measure })
}
