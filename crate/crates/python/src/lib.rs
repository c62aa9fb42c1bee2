//! Python bindings over the clustering pipeline.
//!
//! The module mirrors the library's main operations on in-memory data:
//! synthetic blob generation, deviation-weighted pivotal sampling with
//! HT/Hájek totals, spectral and hierarchical clustering, reverse mapping,
//! silhouette reports, and the full CSV-to-artifacts pipeline. Matrices cross
//! the boundary as 2-D float64 numpy arrays; results come back as plain
//! dicts, lists, and arrays so no Rust types leak into Python.

use std::collections::BTreeMap;
use std::error::Error as _;
use std::path::PathBuf;

use numpy::{IntoPyArray, PyArray1, PyArray2, PyReadonlyArray2};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use phenoclust::assign;
use phenoclust::hclust::{hierarchical_cluster_opts, HclustAlgorithm, LinkageSpec};
use phenoclust::pipeline::{self, RunConfig};
use phenoclust::sampling::{
    hajek_estimate, ht_estimate, inclusion_probabilities, pivotal_sample,
    pivotal_sample_in_order, InclusionPlan, SampleIndexSet, SampleMethod,
};
use phenoclust::simgraph::{similarity_matrix, DistanceMeasure};
use phenoclust::spectral::{
    eigengap_estimate_k, laplacian, smallest_eigenpairs, spectral_cluster_opts,
    ClusterAssignment, LaplacianKind, Provenance, SpectralOptions,
};
use phenoclust::synth::{blobs, BlobSpec, Noise};
use phenoclust::validate::{silhouette, SilhouetteVariant};

fn py_err(e: phenoclust::Error) -> PyErr {
    let mut msg = e.to_string();
    let mut source = e.source();
    while let Some(s) = source {
        // stage wrappers already print their source; only append new text
        let text = s.to_string();
        if !msg.contains(&text) {
            msg.push_str(": ");
            msg.push_str(&text);
        }
        source = s.source();
    }
    match e {
        phenoclust::Error::Io(_) => PyOSError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn parse<T>(value: &str) -> PyResult<T>
where
    T: std::str::FromStr<Err = phenoclust::Error>,
{
    value.parse().map_err(py_err)
}

fn parse_noise(value: &str) -> PyResult<Noise> {
    match value {
        "gaussian" => Ok(Noise::Gaussian),
        "heavy_tailed" => Ok(Noise::HeavyTailed),
        other => Err(PyValueError::new_err(format!(
            "unknown noise model '{other}' (expected gaussian or heavy_tailed)"
        ))),
    }
}

/// Fixed-size unequal-probability sampling design over one population.
///
/// Probabilities are proportional to inverse deviation and sum to exactly
/// `sample_size`; draws use sequential pivotal contests, so every draw has
/// exactly that cardinality.
#[pyclass(module = "phenoclust_py")]
struct SamplingPlan {
    inner: InclusionPlan,
}

#[pymethods]
impl SamplingPlan {
    #[new]
    #[pyo3(signature = (deviations, sample_size, n_traits = 1))]
    fn new(deviations: Vec<f64>, sample_size: usize, n_traits: usize) -> PyResult<Self> {
        let inner =
            inclusion_probabilities(&deviations, sample_size, n_traits).map_err(py_err)?;
        Ok(SamplingPlan { inner })
    }

    #[getter]
    fn probabilities<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray1<f64>> {
        PyArray1::from_slice(py, &self.inner.probabilities)
    }

    #[getter]
    fn target_size(&self) -> usize {
        self.inner.target_size
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    /// Draw one pivotal sample; returns sorted unit positions.
    #[pyo3(signature = (seed, preshuffle = false))]
    fn draw(&self, seed: u64, preshuffle: bool) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sample = if preshuffle {
            let mut order: Vec<usize> = (0..self.inner.n()).collect();
            order.shuffle(&mut rng);
            pivotal_sample_in_order(&self.inner, &order, &mut rng)
        } else {
            pivotal_sample(&self.inner, &mut rng)
        };
        sample.indices
    }

    /// Horvitz–Thompson estimate of the population total from one draw.
    /// `values` holds the sampled units' trait values, aligned with `indices`.
    fn ht_total(&self, values: Vec<f64>, indices: Vec<usize>) -> PyResult<f64> {
        let sample = SampleIndexSet { indices, method: SampleMethod::Pivotal };
        ht_estimate(&values, &self.inner, &sample).map_err(py_err)
    }

    /// Hájek (ratio-adjusted) estimate of the population total.
    #[pyo3(signature = (values, indices, population_size = None))]
    fn hajek_total(
        &self,
        values: Vec<f64>,
        indices: Vec<usize>,
        population_size: Option<usize>,
    ) -> PyResult<f64> {
        let n = population_size.unwrap_or(self.inner.n());
        let sample = SampleIndexSet { indices, method: SampleMethod::Pivotal };
        hajek_estimate(&values, &self.inner, &sample, n).map_err(py_err)
    }
}

/// Gaussian (or heavy-tailed) blobs around axis-aligned centers.
/// Returns `(rows, labels)`; `separation` is in units of `sigma`.
#[pyfunction]
#[pyo3(signature = (n, m, k, separation = 8.0, sigma = 1.0, noise = "gaussian", seed = 0))]
#[allow(clippy::too_many_arguments)]
fn synth_blobs<'py>(
    py: Python<'py>,
    n: usize,
    m: usize,
    k: usize,
    separation: f64,
    sigma: f64,
    noise: &str,
    seed: u64,
) -> PyResult<(Bound<'py, PyArray2<f64>>, Vec<usize>)> {
    let spec = BlobSpec { n, m, k, separation, sigma, noise: parse_noise(noise)? };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rows, labels) = blobs(&spec, &mut rng);
    Ok((rows.into_pyarray(py), labels))
}

/// Dense exp(−d) similarity matrix over all row pairs.
#[pyfunction]
#[pyo3(signature = (rows, measure = "squared_euclidean"))]
fn similarity<'py>(
    py: Python<'py>,
    rows: PyReadonlyArray2<'py, f64>,
    measure: &str,
) -> PyResult<Bound<'py, PyArray2<f64>>> {
    let sim = similarity_matrix(rows.as_array(), parse(measure)?).map_err(py_err)?;
    Ok(sim.values.into_pyarray(py))
}

/// Spectral clustering: exp(−d) graph, Laplacian eigenvectors, k-means.
///
/// With `k=None` the cluster count comes from the eigengap over the first
/// `k_max` eigenvalues. Returns a dict with `labels`, `k`, and the ascending
/// `eigenvalues` that drove the choice.
#[pyfunction]
#[pyo3(signature = (
    rows,
    k = None,
    measure = "squared_euclidean",
    laplacian_kind = "type3",
    k_max = 50,
    seed = 0,
    restarts = 10,
    row_normalize = false,
))]
#[allow(clippy::too_many_arguments)]
fn spectral_cluster<'py>(
    py: Python<'py>,
    rows: PyReadonlyArray2<'py, f64>,
    k: Option<usize>,
    measure: &str,
    laplacian_kind: &str,
    k_max: usize,
    seed: u64,
    restarts: usize,
    row_normalize: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let kind: LaplacianKind = parse(laplacian_kind)?;
    let sim = similarity_matrix(rows.as_array(), parse(measure)?).map_err(py_err)?;
    let n = sim.n();
    let lap = laplacian(&sim, kind);

    let k_max_eff = k_max.min(n).max(2);
    let want = k_max_eff.max(k.unwrap_or(2)).min(n);
    let eigenvalues = smallest_eigenpairs(&lap, want).map_err(py_err)?.eigenvalues;
    let k_used = match k {
        Some(k) => k,
        None => eigengap_estimate_k(&eigenvalues[..k_max_eff], k_max_eff).map_err(py_err)?,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let assignment = spectral_cluster_opts(
        &sim,
        k_used,
        kind,
        &mut rng,
        SpectralOptions { restarts, row_normalize },
    )
    .map_err(py_err)?;

    let out = PyDict::new(py);
    out.set_item("labels", assignment.labels)?;
    out.set_item("k", k_used)?;
    out.set_item("eigenvalues", eigenvalues)?;
    Ok(out)
}

/// Agglomerative clustering cut at `k`. Returns `labels` plus the merge
/// history as `(a, b, height)` tuples with scipy-style cluster ids.
#[pyfunction]
#[pyo3(signature = (rows, k, measure = "squared_euclidean", linkage = "average", algorithm = "naive"))]
fn hierarchical_cluster<'py>(
    py: Python<'py>,
    rows: PyReadonlyArray2<'py, f64>,
    k: usize,
    measure: &str,
    linkage: &str,
    algorithm: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let linkage: LinkageSpec = parse(linkage)?;
    let algorithm: HclustAlgorithm = parse(algorithm)?;
    let (assignment, merges) =
        hierarchical_cluster_opts(rows.as_array(), parse(measure)?, linkage, k, algorithm)
            .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("labels", assignment.labels)?;
    out.set_item("k", assignment.k)?;
    out.set_item(
        "merges",
        merges.iter().map(|s| (s.a, s.b, s.height)).collect::<Vec<_>>(),
    )?;
    Ok(out)
}

/// Extend labels from sampled rows to all rows by average exp(−d) similarity.
///
/// `sample_indices` are positions into `rows`; `sample_labels` aligns with
/// them. Returns full `labels`, per-row `provenance`, and any clusters that
/// had no sampled members.
#[pyfunction]
#[pyo3(signature = (rows, sample_indices, sample_labels, k, measure = "squared_euclidean"))]
fn assign_remaining<'py>(
    py: Python<'py>,
    rows: PyReadonlyArray2<'py, f64>,
    sample_indices: Vec<usize>,
    sample_labels: Vec<usize>,
    k: usize,
    measure: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let sampled = ClusterAssignment {
        provenance: vec![Provenance::Sampled; sample_labels.len()],
        labels: sample_labels,
        k,
    };
    let (full, report) =
        assign::assign_remaining(rows.as_array(), &sample_indices, &sampled, parse(measure)?)
            .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("labels", full.labels)?;
    out.set_item(
        "provenance",
        full.provenance.iter().map(|p| p.as_str()).collect::<Vec<_>>(),
    )?;
    out.set_item("skipped_clusters", report.skipped_clusters)?;
    Ok(out)
}

/// Per-point and per-cluster silhouette report as a dict.
#[pyfunction]
#[pyo3(signature = (rows, labels, measure = "squared_euclidean", variant = "pooled"))]
fn silhouette_report<'py>(
    py: Python<'py>,
    rows: PyReadonlyArray2<'py, f64>,
    labels: Vec<usize>,
    measure: &str,
    variant: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let variant: SilhouetteVariant = parse(variant)?;
    let report =
        silhouette(rows.as_array(), &labels, parse(measure)?, variant).map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("variant", variant.as_str())?;
    out.set_item("per_point", PyArray1::from_slice(py, &report.per_point))?;
    out.set_item("per_cluster_mean", report.per_cluster_mean)?;
    out.set_item("overall_mean", report.overall_mean)?;
    out.set_item("cluster_sizes", report.cluster_sizes)?;
    out.set_item("singleton_count", report.singleton_count)?;
    out.set_item("max_over_median_size", report.max_over_median_size)?;
    Ok(out)
}

/// Run the full pipeline on a CSV file.
///
/// `options` are the same `key=value` settings the CLI and config files use
/// (e.g. `{"k": "auto", "sample_size": "200"}`), applied in sorted key order.
/// With `write_artifacts=True` the run's artifact files are written to the
/// configured output directory, which is then reported under `output_dir`.
#[pyfunction]
#[pyo3(signature = (input, options = None, write_artifacts = false))]
fn run_pipeline<'py>(
    py: Python<'py>,
    input: PathBuf,
    options: Option<BTreeMap<String, String>>,
    write_artifacts: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let mut config = RunConfig::default();
    for (key, value) in options.unwrap_or_default() {
        config.set(&key, &value).map_err(py_err)?;
    }
    config.input = input;
    let output = pipeline::run_pipeline(&config).map_err(py_err)?;

    let out = PyDict::new(py);
    out.set_item("unit_ids", &output.unit_ids)?;
    out.set_item("labels", &output.assignment.labels)?;
    out.set_item(
        "provenance",
        output.assignment.provenance.iter().map(|p| p.as_str()).collect::<Vec<_>>(),
    )?;
    out.set_item("k", output.k_used)?;
    out.set_item("sample", &output.sample)?;
    out.set_item("overall_silhouette", output.silhouette.overall_mean)?;
    out.set_item("singleton_count", output.silhouette.singleton_count)?;
    out.set_item("eigenvalues", &output.eigenvalues)?;
    out.set_item("warnings", &output.warnings)?;
    out.set_item("manifest_digest", &output.manifest.manifest_digest)?;
    if write_artifacts {
        let dir = config.effective_output_dir();
        pipeline::write_artifacts(&output, &dir).map_err(py_err)?;
        out.set_item("output_dir", dir)?;
    }
    Ok(out)
}

/// Names accepted wherever a distance measure is expected.
#[pyfunction]
fn distance_measures() -> Vec<&'static str> {
    DistanceMeasure::ALL.iter().map(|m| m.as_str()).collect()
}

#[pymodule]
fn phenoclust_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<SamplingPlan>()?;
    m.add_function(wrap_pyfunction!(synth_blobs, m)?)?;
    m.add_function(wrap_pyfunction!(similarity, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_cluster, m)?)?;
    m.add_function(wrap_pyfunction!(hierarchical_cluster, m)?)?;
    m.add_function(wrap_pyfunction!(assign_remaining, m)?)?;
    m.add_function(wrap_pyfunction!(silhouette_report, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(distance_measures, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
