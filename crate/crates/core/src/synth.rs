//! Synthetic blob generator so benchmarks and tests need no external data.
//!
//! Cluster centers sit on scaled coordinate axes: center j has coordinate
//! (1 + j/m) · separation · sigma in dimension j mod m, zeros elsewhere.
//! Any two centers are then at least separation · sigma apart.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal, StudentT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    Gaussian,
    /// Student t with 2 degrees of freedom: heavy tails, outliers guaranteed.
    HeavyTailed,
}

#[derive(Debug, Clone)]
pub struct BlobSpec {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    /// Minimal pairwise center distance in units of sigma.
    pub separation: f64,
    pub sigma: f64,
    pub noise: Noise,
}

/// Generate `spec.n` points in `spec.k` planted clusters. Cluster sizes are
/// as equal as n allows (the first n mod k clusters get one extra point).
/// Returns the data rows and the planted label of each row.
pub fn blobs(spec: &BlobSpec, rng: &mut impl Rng) -> (Array2<f64>, Vec<usize>) {
    assert!(spec.k >= 1 && spec.m >= 1 && spec.n >= spec.k);
    let mut centers = Array2::<f64>::zeros((spec.k, spec.m));
    for j in 0..spec.k {
        centers[(j, j % spec.m)] = (1 + j / spec.m) as f64 * spec.separation * spec.sigma;
    }

    let normal = Normal::new(0.0, spec.sigma).expect("sigma must be finite");
    let student = StudentT::new(2.0).expect("fixed df");

    let base = spec.n / spec.k;
    let extra = spec.n % spec.k;
    let mut rows = Array2::<f64>::zeros((spec.n, spec.m));
    let mut labels = Vec::with_capacity(spec.n);
    let mut r = 0;
    for c in 0..spec.k {
        let size = base + usize::from(c < extra);
        for _ in 0..size {
            for j in 0..spec.m {
                let noise = match spec.noise {
                    Noise::Gaussian => normal.sample(rng),
                    Noise::HeavyTailed => spec.sigma * student.sample(rng),
                };
                rows[(r, j)] = centers[(c, j)] + noise;
            }
            labels.push(c);
            r += 1;
        }
    }
    (rows, labels)
}
