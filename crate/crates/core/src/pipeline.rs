//! End-to-end orchestration: run configuration, the staged pipeline
//! (ingest → sampling → similarity → clustering → reverse-map → validation),
//! estimator audits, benchmark grids, and artifact emission.

use std::collections::BTreeMap;
use std::io::Write as IoWrite;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::assign::{assign_remaining, ReverseMapReport};
use crate::error::{Error, Result};
use crate::hclust::{
    hierarchical_cluster_precomputed, HclustAlgorithm, LinkageSpec, MergeStep,
};
use crate::ingest::{
    encode_categorical, normalize, parse_table, select_columns, Cell, ColumnKind, EncodingMaps,
    FeatureTable, NormalizedTable, Schema,
};
use crate::sampling::{
    hajek_estimate, ht_estimate, inclusion_probabilities, pivotal_sample_in_order, vq_sample,
    EstimateReport, InclusionPlan, SampleIndexSet, SampleMethod,
};
use crate::simgraph::{distance_matrix, similarity_matrix, DistanceMeasure, DEFAULT_MATRIX_CAP};
use crate::spectral::{
    eigengap_estimate_k, kmeans_fit, laplacian, smallest_eigenpairs, ClusterAssignment,
    LaplacianKind, Provenance,
};
use crate::validate::{silhouette, SilhouetteReport, SilhouetteVariant};

/// Stream ids for the per-stage RNG substreams: one seed reproduces the whole
/// run, and stages cannot perturb each other's draws.
const STREAM_SAMPLING: u64 = 1;
const STREAM_KMEANS: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;

pub const OUTPUT_DIR_ENV: &str = "PHENOCLUST_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Pivotal,
    Vq,
    None,
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pivotal" => Ok(SamplerKind::Pivotal),
            "vq" => Ok(SamplerKind::Vq),
            "none" => Ok(SamplerKind::None),
            _ => Err(Error::Config(format!(
                "unknown sampler {s:?}; expected pivotal, vq or none"
            ))),
        }
    }
}

impl SamplerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SamplerKind::Pivotal => "pivotal",
            SamplerKind::Vq => "vq",
            SamplerKind::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    Spectral,
    Hierarchical,
}

impl std::str::FromStr for AlgorithmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(AlgorithmKind::Spectral),
            "hierarchical" => Ok(AlgorithmKind::Hierarchical),
            _ => Err(Error::Config(format!(
                "unknown algorithm {s:?}; expected spectral or hierarchical"
            ))),
        }
    }
}

impl AlgorithmKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AlgorithmKind::Spectral => "spectral",
            AlgorithmKind::Hierarchical => "hierarchical",
        }
    }
}

/// Full description of one run. Built from a flat key=value config file,
/// overridden by CLI flags (flags win).
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub input: PathBuf,
    pub delimiter: char,
    pub schema: Schema,
    pub encodings: EncodingMaps,
    /// Trait subset, applied in the given order; empty means all columns.
    pub traits: Vec<String>,
    pub sampler: SamplerKind,
    pub sample_size: usize,
    pub algorithm: AlgorithmKind,
    pub measure: DistanceMeasure,
    pub laplacian: LaplacianKind,
    pub linkage: LinkageSpec,
    /// `None` = choose k by the eigengap (spectral only), bounded by `k_max`.
    pub k: Option<usize>,
    pub k_max: usize,
    pub seed: u64,
    pub restarts: usize,
    pub output_dir: PathBuf,
    pub silhouette_variant: SilhouetteVariant,
    pub row_normalize: bool,
    /// Shuffle the unit order before the pivotal scan.
    pub preshuffle: bool,
    pub hclust_algorithm: HclustAlgorithm,
    pub dump_merges: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: PathBuf::new(),
            delimiter: ',',
            schema: Schema::default(),
            encodings: EncodingMaps::new(),
            traits: Vec::new(),
            sampler: SamplerKind::Pivotal,
            sample_size: 500,
            algorithm: AlgorithmKind::Spectral,
            measure: DistanceMeasure::SquaredEuclidean,
            laplacian: LaplacianKind::Type3,
            linkage: LinkageSpec::Average,
            k: Some(10),
            k_max: 50,
            seed: 0,
            restarts: 10,
            output_dir: PathBuf::from("out"),
            silhouette_variant: SilhouetteVariant::PooledOthers,
            row_normalize: false,
            preshuffle: false,
            hclust_algorithm: HclustAlgorithm::Naive,
            dump_merges: false,
        }
    }
}

impl RunConfig {
    /// Parse a flat key=value file. Lines starting with `#` and blank lines
    /// are skipped. Unknown keys are rejected so typos fail loudly.
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        let mut config = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("config line {}: expected key=value", lineno + 1))
            })?;
            config.set(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    /// Apply one key=value pair; shared by the file parser and flag overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad_int = |key: &str, value: &str| {
            Error::Config(format!("config key {key}: {value:?} is not a valid integer"))
        };
        match key {
            "input" => self.input = PathBuf::from(value),
            "delimiter" => {
                let mut chars = value.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => self.delimiter = c,
                    _ => {
                        return Err(Error::Config(format!(
                            "delimiter must be a single character, got {value:?}"
                        )))
                    }
                }
            }
            "categorical" => {
                for name in split_list(value) {
                    self.schema.kinds.insert(name, ColumnKind::Categorical);
                }
            }
            "traits" => self.traits = split_list(value),
            "sampler" => self.sampler = value.parse()?,
            "sample_size" => {
                self.sample_size = value.parse().map_err(|_| bad_int(key, value))?
            }
            "algorithm" => self.algorithm = value.parse()?,
            "measure" => self.measure = value.parse()?,
            "laplacian" => self.laplacian = value.parse()?,
            "linkage" => self.linkage = value.parse()?,
            "k" => {
                self.k = if value == "auto" {
                    None
                } else {
                    Some(value.parse().map_err(|_| bad_int(key, value))?)
                }
            }
            "k_max" => self.k_max = value.parse().map_err(|_| bad_int(key, value))?,
            "seed" => self.seed = value.parse().map_err(|_| bad_int(key, value))?,
            "restarts" => self.restarts = value.parse().map_err(|_| bad_int(key, value))?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "silhouette" => self.silhouette_variant = value.parse()?,
            "row_normalize" => self.row_normalize = parse_bool(key, value)?,
            "preshuffle" => self.preshuffle = parse_bool(key, value)?,
            "hclust_algorithm" => self.hclust_algorithm = value.parse()?,
            "dump_merges" => self.dump_merges = parse_bool(key, value)?,
            _ if key.starts_with("encode.") => {
                let column = key.trim_start_matches("encode.").to_string();
                self.schema.kinds.insert(column.clone(), ColumnKind::Categorical);
                self.encodings.insert(column, split_list(value));
            }
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// The output directory, honoring the environment override.
    pub fn effective_output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.output_dir.clone())
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(k) = self.k {
            if k < 2 {
                return Err(Error::Config(format!("k must be at least 2, got {k}")));
            }
        } else if self.algorithm != AlgorithmKind::Spectral {
            return Err(Error::Config(
                "k=auto uses the eigengap and requires algorithm=spectral".into(),
            ));
        }
        if self.k_max < 2 {
            return Err(Error::Config(format!(
                "k_max must be at least 2, got {}",
                self.k_max
            )));
        }
        if self.restarts < 1 {
            return Err(Error::Config("restarts must be at least 1".into()));
        }
        if self.sampler != SamplerKind::None && self.sample_size < 2 {
            return Err(Error::Config(format!(
                "sample_size must be at least 2, got {}",
                self.sample_size
            )));
        }
        if self.algorithm == AlgorithmKind::Hierarchical
            && self.linkage == LinkageSpec::Ward
            && self.measure != DistanceMeasure::SquaredEuclidean
        {
            return Err(Error::Config(format!(
                "ward linkage requires squared_euclidean geometry, got {}",
                self.measure
            )));
        }
        Ok(())
    }
}

fn split_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(Error::Config(format!(
            "config key {key}: expected true or false, got {value:?}"
        ))),
    }
}

/// Provenance record for one run. The digest covers the config snapshot, the
/// input digest and the library version — not the timings — so reruns of the
/// same work share a digest while their manifests may differ in timing.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub library_version: String,
    pub config: serde_json::Value,
    pub input_digest: String,
    pub manifest_digest: String,
    pub timings_ms: BTreeMap<String, f64>,
    pub total_wall_ms: f64,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Config snapshot used for digesting. `output_dir` is dropped: where the
/// artifacts land is not part of what was computed, and runs into different
/// directories must still produce identical artifact bytes.
fn digest_config_json(config_value: &serde_json::Value) -> Result<String> {
    let mut for_digest = config_value.clone();
    if let Some(map) = for_digest.as_object_mut() {
        map.remove("output_dir");
    }
    Ok(serde_json::to_string(&for_digest)?)
}

fn build_manifest(
    config: &RunConfig,
    input_digest: &str,
    timings_ms: BTreeMap<String, f64>,
    total_wall_ms: f64,
) -> Result<RunManifest> {
    let version = env!("CARGO_PKG_VERSION").to_string();
    let config_value = serde_json::to_value(config)?;
    let config_json = digest_config_json(&config_value)?;
    let manifest_digest = sha256_hex(format!("{version}\n{config_json}\n{input_digest}").as_bytes());
    Ok(RunManifest {
        library_version: version,
        config: config_value,
        input_digest: input_digest.to_string(),
        manifest_digest,
        timings_ms,
        total_wall_ms,
    })
}

/// Everything a run produces, ready for artifact writers.
#[derive(Debug)]
pub struct PipelineOutput {
    pub unit_ids: Vec<String>,
    pub assignment: ClusterAssignment,
    pub sample: Vec<usize>,
    pub sample_method: Option<SampleMethod>,
    pub k_used: usize,
    pub silhouette: SilhouetteReport,
    /// Per-trait totals; present only under the pivotal sampler (the only
    /// design with inclusion probabilities).
    pub estimates: Vec<EstimateReport>,
    /// Smallest eigenvalues of the configured Laplacian (spectral runs).
    pub eigenvalues: Option<Vec<f64>>,
    /// Agglomeration history (hierarchical runs with dump_merges).
    pub merges: Option<Vec<MergeStep>>,
    pub reverse_map: Option<ReverseMapReport>,
    pub warnings: Vec<String>,
    pub manifest: RunManifest,
}

/// Run the configured pipeline on the input file named in the config.
pub fn run_pipeline(config: &RunConfig) -> Result<PipelineOutput> {
    let (table, digest) = load_input(config)?;
    run_pipeline_on(config, &table, &digest)
}

/// Read and parse the configured input file; returns the table and the
/// SHA-256 of the raw bytes.
pub fn load_input(config: &RunConfig) -> Result<(FeatureTable, String)> {
    if config.input.as_os_str().is_empty() {
        return Err(Error::Config("no input file configured".into()));
    }
    let bytes = std::fs::read(&config.input).map_err(|e| {
        Error::Config(format!("cannot read input {}: {e}", config.input.display()))
    })?;
    let digest = sha256_hex(&bytes);
    let table = parse_table(bytes.as_slice(), &config.schema, config.delimiter as u8)
        .map_err(|e| e.in_stage("ingest"))?;
    Ok((table, digest))
}

/// Digest for tables that never touched disk (synthetic benchmarks): a
/// canonical CSV rendering of ids, columns and cell values.
pub fn table_digest(table: &FeatureTable) -> String {
    let mut canon = String::new();
    canon.push_str("id");
    for (name, _) in &table.columns {
        canon.push(',');
        canon.push_str(name);
    }
    canon.push('\n');
    for (i, id) in table.unit_ids.iter().enumerate() {
        canon.push_str(id);
        for cell in &table.cells[i] {
            canon.push(',');
            match cell {
                Cell::Number(v) => canon.push_str(&format!("{v}")),
                Cell::Text(t) => canon.push_str(t),
            }
        }
        canon.push('\n');
    }
    sha256_hex(canon.as_bytes())
}

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Run the pipeline on an already-parsed table. `input_digest` feeds the
/// manifest; use `table_digest` for in-memory tables.
pub fn run_pipeline_on(
    config: &RunConfig,
    table: &FeatureTable,
    input_digest: &str,
) -> Result<PipelineOutput> {
    let wall_start = Instant::now();
    config.validate()?;

    let encoded = prepare_table(config, table).map_err(|e| e.in_stage("ingest"))?;
    let norm = normalize(&encoded).map_err(|e| e.in_stage("ingest"))?;
    let n = norm.n();
    let mut timings: BTreeMap<String, f64> = BTreeMap::new();
    for stage in ["sampling", "similarity", "eigensolve", "kmeans", "reverse_map", "silhouette"] {
        timings.insert(stage.to_string(), 0.0);
    }
    let mut warnings = Vec::new();

    // --- sampling
    let t = Instant::now();
    let (sample, method, plan) = draw_sample(config, &norm).map_err(|e| e.in_stage("sampling"))?;
    timings.insert("sampling".into(), ms(t));
    let big_n = sample.len();

    let sampled_rows = gather_rows(&norm.values, &sample);

    // --- clustering on the sampled rows
    let mut eigenvalues = None;
    let mut merges = None;
    let sampled_assignment = match config.algorithm {
        AlgorithmKind::Spectral => {
            let t = Instant::now();
            let sim = similarity_matrix(sampled_rows.view(), config.measure)
                .map_err(|e| e.in_stage("similarity"))?;
            timings.insert("similarity".into(), ms(t));

            let t = Instant::now();
            let lap = laplacian(&sim, config.laplacian);
            let dump_count = 50.min(big_n);
            let k_max_eff = config.k_max.min(big_n);
            let want = match config.k {
                Some(k) => {
                    if k > big_n {
                        return Err(Error::TooManyClusters { k, n: big_n }
                            .in_stage("eigensolve"));
                    }
                    k.max(dump_count)
                }
                None => k_max_eff.max(dump_count),
            };
            let embedding = smallest_eigenpairs(&lap, want)
                .map_err(|e| e.in_stage("eigensolve"))?;
            let k_used = match config.k {
                Some(k) => k,
                None => eigengap_estimate_k(&embedding.eigenvalues[..k_max_eff], k_max_eff)
                    .map_err(|e| e.in_stage("eigensolve"))?,
            };
            eigenvalues = Some(embedding.eigenvalues[..dump_count].to_vec());
            timings.insert("eigensolve".into(), ms(t));

            let t = Instant::now();
            let mut rows = embedding.vectors.slice(ndarray::s![.., ..k_used]).to_owned();
            if config.row_normalize {
                for mut row in rows.rows_mut() {
                    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        row.mapv_inplace(|v| v / norm);
                    }
                }
            }
            let mut rng = substream(config.seed, STREAM_KMEANS);
            let labels = kmeans_fit(rows.view(), k_used, &mut rng, config.restarts)
                .map_err(|e| e.in_stage("kmeans"))?
                .labels;
            timings.insert("kmeans".into(), ms(t));
            ClusterAssignment {
                labels,
                k: k_used,
                provenance: vec![Provenance::Sampled; big_n],
            }
        }
        AlgorithmKind::Hierarchical => {
            let k = config.k.expect("validate() rejects auto-k for hierarchical");
            if big_n > DEFAULT_MATRIX_CAP {
                return Err(Error::Config(format!(
                    "distance matrix over {big_n} rows exceeds the {DEFAULT_MATRIX_CAP} cap; sample first"
                ))
                .in_stage("similarity"));
            }
            let t = Instant::now();
            let d = distance_matrix(sampled_rows.view(), config.measure)
                .map_err(|e| e.in_stage("similarity"))?;
            timings.insert("similarity".into(), ms(t));

            let t = Instant::now();
            let (assignment, history) =
                hierarchical_cluster_precomputed(&d, config.linkage, k, config.hclust_algorithm)
                    .map_err(|e| e.in_stage("hclust"))?;
            timings.insert("hclust".into(), ms(t));
            if config.dump_merges {
                merges = Some(history);
            }
            assignment
        }
    };
    let k_used = sampled_assignment.k;

    // --- reverse-map
    let t = Instant::now();
    let (assignment, reverse_map) = if big_n == n {
        (sampled_assignment, None)
    } else {
        let (full, report) =
            assign_remaining(norm.values.view(), &sample, &sampled_assignment, config.measure)
                .map_err(|e| e.in_stage("reverse_map"))?;
        for &c in &report.skipped_clusters {
            warnings.push(format!("cluster {c} has no sampled members; skipped in reverse mapping"));
        }
        (full, Some(report))
    };
    timings.insert("reverse_map".into(), ms(t));

    // --- silhouette over the full assignment
    let t = Instant::now();
    let silhouette_report = silhouette(
        norm.values.view(),
        &assignment.labels,
        config.measure,
        config.silhouette_variant,
    )
    .map_err(|e| e.in_stage("silhouette"))?;
    timings.insert("silhouette".into(), ms(t));

    // --- estimator audit rows, only meaningful with inclusion probabilities
    let estimates = match (&plan, method) {
        (Some(plan), Some(SampleMethod::Pivotal)) => {
            estimate_numeric_traits(config, &encoded, plan, &sample)?
        }
        _ => Vec::new(),
    };

    let manifest = build_manifest(config, input_digest, timings, ms_since(wall_start))?;
    Ok(PipelineOutput {
        unit_ids: encoded.unit_ids,
        assignment,
        sample,
        sample_method: method,
        k_used,
        silhouette: silhouette_report,
        estimates,
        eigenvalues,
        merges,
        reverse_map,
        warnings,
        manifest,
    })
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn prepare_table(config: &RunConfig, table: &FeatureTable) -> Result<FeatureTable> {
    let encoded = encode_categorical(table, &config.encodings)?;
    if config.traits.is_empty() {
        Ok(encoded)
    } else {
        select_columns(&encoded, &config.traits)
    }
}

fn draw_sample(
    config: &RunConfig,
    norm: &NormalizedTable,
) -> Result<(Vec<usize>, Option<SampleMethod>, Option<InclusionPlan>)> {
    let n = norm.n();
    match config.sampler {
        SamplerKind::None => Ok(((0..n).collect(), None, None)),
        SamplerKind::Pivotal => {
            let plan = inclusion_probabilities(
                norm.deviations.as_slice().expect("contiguous"),
                config.sample_size,
                norm.m(),
            )?;
            let mut order: Vec<usize> = (0..n).collect();
            if config.preshuffle {
                order.shuffle(&mut substream(config.seed, STREAM_SHUFFLE));
            }
            let mut rng = substream(config.seed, STREAM_SAMPLING);
            let set = pivotal_sample_in_order(&plan, &order, &mut rng);
            Ok((set.indices, Some(SampleMethod::Pivotal), Some(plan)))
        }
        SamplerKind::Vq => {
            let mut rng = substream(config.seed, STREAM_SAMPLING);
            let set = vq_sample(norm.values.view(), config.sample_size, &mut rng)?;
            Ok((set.indices, Some(SampleMethod::Vq), None))
        }
    }
}

fn gather_rows(values: &Array2<f64>, indices: &[usize]) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((indices.len(), values.ncols()));
    for (pos, &i) in indices.iter().enumerate() {
        out.row_mut(pos).assign(&values.row(i));
    }
    out
}

fn numeric_column(table: &FeatureTable, col: usize) -> Result<Vec<f64>> {
    table
        .cells
        .iter()
        .map(|row| match &row[col] {
            Cell::Number(v) => Ok(*v),
            Cell::Text(_) => Err(Error::Config(format!(
                "column {:?} is categorical; encode it before use",
                table.columns[col].0
            ))),
        })
        .collect()
}

/// HT and Hájek totals for every originally-numeric trait in the table,
/// using raw (pre-normalization) values.
fn estimate_numeric_traits(
    config: &RunConfig,
    encoded: &FeatureTable,
    plan: &InclusionPlan,
    sample: &[usize],
) -> Result<Vec<EstimateReport>> {
    let set = SampleIndexSet { indices: sample.to_vec(), method: SampleMethod::Pivotal };
    let mut reports = Vec::new();
    for (col, (name, _)) in encoded.columns.iter().enumerate() {
        let originally_categorical =
            config.schema.kinds.get(name) == Some(&ColumnKind::Categorical);
        if originally_categorical {
            continue;
        }
        let values = numeric_column(encoded, col)?;
        let actual: f64 = values.iter().sum();
        let sampled_values: Vec<f64> = sample.iter().map(|&i| values[i]).collect();
        reports.push(EstimateReport {
            trait_name: name.clone(),
            actual_total: Some(actual),
            ht_estimate: ht_estimate(&sampled_values, plan, &set)?,
            hajek_estimate: hajek_estimate(&sampled_values, plan, &set, encoded.n())?,
        });
    }
    Ok(reports)
}

/// Estimator audit: sample once with the pivotal design, then estimate the
/// requested traits' population totals. `sample_size == n` is the census
/// path: every unit enters with probability 1.
pub fn run_estimator_audit(config: &RunConfig, traits: &[String]) -> Result<Vec<EstimateReport>> {
    let (table, _) = load_input(config)?;
    run_estimator_audit_on(config, &table, traits)
}

pub fn run_estimator_audit_on(
    config: &RunConfig,
    table: &FeatureTable,
    traits: &[String],
) -> Result<Vec<EstimateReport>> {
    if traits.is_empty() {
        return Err(Error::Config("no traits requested for the audit".into()));
    }
    for name in traits {
        if config.schema.kinds.get(name) == Some(&ColumnKind::Categorical) {
            return Err(Error::Config(format!(
                "trait {name:?} is categorical; totals are only defined for numeric traits"
            )));
        }
        if !table.columns.iter().any(|(c, _)| c == name) {
            return Err(Error::UnknownColumn(name.clone()));
        }
    }

    let encoded = prepare_table(config, table)?;
    let norm = normalize(&encoded)?;
    let n = norm.n();

    let (plan, set) = if config.sample_size == n {
        // census: the design degenerates to certainty for every unit
        let plan = InclusionPlan { probabilities: vec![1.0; n], target_size: n };
        let set = SampleIndexSet { indices: (0..n).collect(), method: SampleMethod::Pivotal };
        (plan, set)
    } else {
        let plan = inclusion_probabilities(
            norm.deviations.as_slice().expect("contiguous"),
            config.sample_size,
            norm.m(),
        )?;
        let mut order: Vec<usize> = (0..n).collect();
        if config.preshuffle {
            order.shuffle(&mut substream(config.seed, STREAM_SHUFFLE));
        }
        let mut rng = substream(config.seed, STREAM_SAMPLING);
        let set = pivotal_sample_in_order(&plan, &order, &mut rng);
        (plan, set)
    };

    let mut reports = Vec::new();
    for name in traits {
        let col = table
            .columns
            .iter()
            .position(|(c, _)| c == name)
            .expect("checked above");
        let values = numeric_column(table, col)?;
        let actual: f64 = values.iter().sum();
        let sampled_values: Vec<f64> = set.indices.iter().map(|&i| values[i]).collect();
        reports.push(EstimateReport {
            trait_name: name.clone(),
            actual_total: Some(actual),
            ht_estimate: ht_estimate(&sampled_values, &plan, &set)?,
            hajek_estimate: hajek_estimate(&sampled_values, &plan, &set, n)?,
        });
    }
    Ok(reports)
}

/// The smallest `count` eigenvalues of the configured Laplacian over the
/// sampled units' similarity graph.
pub fn emit_eigenvalue_plotdata(config: &RunConfig, count: usize) -> Result<Vec<f64>> {
    let (table, digest) = load_input(config)?;
    emit_eigenvalue_plotdata_on(config, &table, &digest, count)
}

pub fn emit_eigenvalue_plotdata_on(
    config: &RunConfig,
    table: &FeatureTable,
    _input_digest: &str,
    count: usize,
) -> Result<Vec<f64>> {
    config.validate()?;
    let encoded = prepare_table(config, table).map_err(|e| e.in_stage("ingest"))?;
    let norm = normalize(&encoded).map_err(|e| e.in_stage("ingest"))?;
    let (sample, _, _) = draw_sample(config, &norm).map_err(|e| e.in_stage("sampling"))?;
    let rows = gather_rows(&norm.values, &sample);
    let sim = similarity_matrix(rows.view(), config.measure).map_err(|e| e.in_stage("similarity"))?;
    let lap = laplacian(&sim, config.laplacian);
    let embedding = smallest_eigenpairs(&lap, count).map_err(|e| e.in_stage("eigensolve"))?;
    Ok(embedding.eigenvalues)
}

// ---------------------------------------------------------------------------
// Benchmark grid

#[derive(Debug, Clone, Copy)]
pub struct BenchOptions {
    /// Also run the unsampled hierarchical baseline and report the wall-time
    /// ratio of the sampled spectral pipeline against it.
    pub baseline: bool,
    /// Repetitions for the timing comparison; the ratio uses medians.
    pub timing_repeats: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions { baseline: false, timing_repeats: 1 }
    }
}

/// One comparison-table row. Deliberately free of timing data so bench
/// artifacts are byte-stable; timings live in the bench manifest.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub sampler: SamplerKind,
    pub algorithm: AlgorithmKind,
    pub k_used: usize,
    pub overall_silhouette: f64,
    pub singleton_count: usize,
    pub max_over_median_size: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchManifest {
    pub library_version: String,
    pub config: serde_json::Value,
    pub input_digest: String,
    pub manifest_digest: String,
    pub cell_wall_ms: BTreeMap<String, f64>,
    /// Median sampled-spectral wall time over the median unsampled-HC wall
    /// time, when the baseline ran.
    pub sampled_over_full_hc_wall_ratio: Option<f64>,
}

#[derive(Debug)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Cell name → full pipeline output, for artifact emission.
    pub cells: Vec<(String, PipelineOutput)>,
    pub manifest: BenchManifest,
}

/// Run the 2×2 sampler × algorithm grid on one table with one seed. Every
/// cell sees the same input digest and seed, so rows are mutually comparable.
pub fn run_bench(
    config: &RunConfig,
    table: &FeatureTable,
    input_digest: &str,
    opts: &BenchOptions,
) -> Result<BenchReport> {
    if config.k.is_none() {
        return Err(Error::Config(
            "bench requires a fixed k so the hierarchical cells are defined".into(),
        ));
    }
    let grid = [
        (SamplerKind::Pivotal, AlgorithmKind::Spectral),
        (SamplerKind::Pivotal, AlgorithmKind::Hierarchical),
        (SamplerKind::Vq, AlgorithmKind::Spectral),
        (SamplerKind::Vq, AlgorithmKind::Hierarchical),
    ];

    let mut rows = Vec::new();
    let mut cells = Vec::new();
    let mut cell_wall_ms = BTreeMap::new();
    for (sampler, algorithm) in grid {
        let mut cell_config = config.clone();
        cell_config.sampler = sampler;
        cell_config.algorithm = algorithm;
        let name = format!("{}_{}", sampler.as_str(), algorithm.as_str());
        let started = Instant::now();
        let output = run_pipeline_on(&cell_config, table, input_digest)
            .map_err(|e| e.in_stage("bench"))?;
        cell_wall_ms.insert(name.clone(), ms_since(started));
        rows.push(BenchRow {
            sampler,
            algorithm,
            k_used: output.k_used,
            overall_silhouette: output.silhouette.overall_mean,
            singleton_count: output.silhouette.singleton_count,
            max_over_median_size: output.silhouette.max_over_median_size,
        });
        cells.push((name, output));
    }

    let mut ratio = None;
    if opts.baseline {
        let mut baseline_config = config.clone();
        baseline_config.sampler = SamplerKind::None;
        baseline_config.algorithm = AlgorithmKind::Hierarchical;
        let mut sampled_config = config.clone();
        sampled_config.sampler = SamplerKind::Pivotal;
        sampled_config.algorithm = AlgorithmKind::Spectral;

        let mut sampled_times = Vec::new();
        let mut baseline_times = Vec::new();
        for _ in 0..opts.timing_repeats.max(1) {
            let t = Instant::now();
            run_pipeline_on(&sampled_config, table, input_digest)?;
            sampled_times.push(ms_since(t));
            let t = Instant::now();
            let baseline = run_pipeline_on(&baseline_config, table, input_digest)?;
            baseline_times.push(ms_since(t));
            cell_wall_ms.insert("none_hierarchical".into(), *baseline_times.last().unwrap());
            drop(baseline);
        }
        let med_sampled = median(&mut sampled_times);
        let med_baseline = median(&mut baseline_times);
        ratio = Some(med_sampled / med_baseline);
    }

    let version = env!("CARGO_PKG_VERSION").to_string();
    let config_value = serde_json::to_value(config)?;
    let config_json = digest_config_json(&config_value)?;
    let manifest_digest =
        sha256_hex(format!("bench\n{version}\n{config_json}\n{input_digest}").as_bytes());
    Ok(BenchReport {
        rows,
        cells,
        manifest: BenchManifest {
            library_version: version,
            config: config_value,
            input_digest: input_digest.to_string(),
            manifest_digest,
            cell_wall_ms,
            sampled_over_full_hc_wall_ratio: ratio,
        },
    })
}

fn median(times: &mut [f64]) -> f64 {
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = times.len() / 2;
    if times.len() % 2 == 1 {
        times[mid]
    } else {
        (times[mid - 1] + times[mid]) / 2.0
    }
}

// ---------------------------------------------------------------------------
// Artifact writers

/// Write all artifacts for one run into `dir`. Files carry the manifest
/// digest so any artifact can be traced to its manifest. On failure every
/// file written so far is removed; no partial artifact set survives.
pub fn write_artifacts(output: &PipelineOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written: Vec<PathBuf> = Vec::new();
    let result = write_artifacts_inner(output, dir, &mut written);
    if let Err(e) = result {
        for path in &written {
            let _ = std::fs::remove_file(path);
        }
        return Err(e);
    }
    Ok(written)
}

fn write_artifacts_inner(
    output: &PipelineOutput,
    dir: &Path,
    written: &mut Vec<PathBuf>,
) -> Result<()> {
    let digest = &output.manifest.manifest_digest;

    // assignment.csv
    {
        let mut buf = Vec::new();
        writeln!(buf, "# manifest {digest}")?;
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["unit_id", "cluster", "provenance"])?;
        for (i, id) in output.unit_ids.iter().enumerate() {
            w.write_record([
                id.as_str(),
                &output.assignment.labels[i].to_string(),
                output.assignment.provenance[i].as_str(),
            ])?;
        }
        let buf = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        persist(dir.join("assignment.csv"), &buf, written)?;
    }

    // silhouette.json
    {
        #[derive(Serialize)]
        struct SilhouetteArtifact<'a> {
            manifest_digest: &'a str,
            report: &'a SilhouetteReport,
        }
        let body = serde_json::to_vec_pretty(&SilhouetteArtifact {
            manifest_digest: digest,
            report: &output.silhouette,
        })?;
        persist(dir.join("silhouette.json"), &body, written)?;
    }

    // histogram.csv: cluster sizes for external plotting
    {
        let mut buf = Vec::new();
        writeln!(buf, "# manifest {digest}")?;
        writeln!(buf, "cluster,size")?;
        for (c, size) in output.silhouette.cluster_sizes.iter().enumerate() {
            writeln!(buf, "{c},{size}")?;
        }
        persist(dir.join("histogram.csv"), &buf, written)?;
    }

    if !output.estimates.is_empty() {
        let mut buf = Vec::new();
        writeln!(buf, "# manifest {digest}")?;
        writeln!(buf, "trait,actual_total,ht_estimate,hajek_estimate")?;
        for e in &output.estimates {
            let actual = e.actual_total.map_or(String::new(), |v| v.to_string());
            writeln!(buf, "{},{},{},{}", e.trait_name, actual, e.ht_estimate, e.hajek_estimate)?;
        }
        persist(dir.join("estimators.csv"), &buf, written)?;
    }

    if let Some(eigenvalues) = &output.eigenvalues {
        let mut buf = Vec::new();
        writeln!(buf, "# manifest {digest}")?;
        writeln!(buf, "index,eigenvalue")?;
        for (i, v) in eigenvalues.iter().enumerate() {
            writeln!(buf, "{},{v}", i + 1)?;
        }
        persist(dir.join("eigenvalues.csv"), &buf, written)?;
    }

    if let Some(merges) = &output.merges {
        let mut buf = Vec::new();
        writeln!(buf, "# manifest {digest}")?;
        writeln!(buf, "step,cluster_a,cluster_b,height")?;
        for m in merges {
            writeln!(buf, "{},{},{},{}", m.step, m.a, m.b, m.height)?;
        }
        persist(dir.join("merges.csv"), &buf, written)?;
    }

    let manifest_body = serde_json::to_vec_pretty(&output.manifest)?;
    persist(dir.join("manifest.json"), &manifest_body, written)?;
    Ok(())
}

/// Write the eigenvalue plot data produced by `emit_eigenvalue_plotdata`.
pub fn write_eigenvalues_csv(eigenvalues: &[f64], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut buf = Vec::new();
    writeln!(buf, "index,eigenvalue")?;
    for (i, v) in eigenvalues.iter().enumerate() {
        writeln!(buf, "{},{v}", i + 1)?;
    }
    std::fs::write(path, buf)?;
    Ok(())
}

/// Write a Table-2-shaped estimator audit.
pub fn write_estimators_csv(reports: &[EstimateReport], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut buf = Vec::new();
    writeln!(buf, "trait,actual_total,ht_estimate,hajek_estimate")?;
    for e in reports {
        let actual = e.actual_total.map_or(String::new(), |v| v.to_string());
        writeln!(buf, "{},{},{},{}", e.trait_name, actual, e.ht_estimate, e.hajek_estimate)?;
    }
    std::fs::write(path, buf)?;
    Ok(())
}

/// Write the bench comparison table plus per-cell artifacts under `dir`.
pub fn write_bench_artifacts(report: &BenchReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| -> Result<()> {
        let mut buf = Vec::new();
        writeln!(buf, "# manifest {}", report.manifest.manifest_digest)?;
        writeln!(
            buf,
            "sampler,algorithm,k,overall_silhouette,singleton_count,max_over_median_size"
        )?;
        for row in &report.rows {
            writeln!(
                buf,
                "{},{},{},{},{},{}",
                row.sampler.as_str(),
                row.algorithm.as_str(),
                row.k_used,
                row.overall_silhouette,
                row.singleton_count,
                row.max_over_median_size
            )?;
        }
        persist(dir.join("bench.csv"), &buf, &mut written)?;

        for (name, output) in &report.cells {
            let cell_dir = dir.join(name);
            let mut cell_written = write_artifacts(output, &cell_dir)?;
            written.append(&mut cell_written);
        }

        let manifest_body = serde_json::to_vec_pretty(&report.manifest)?;
        persist(dir.join("manifest.json"), &manifest_body, &mut written)?;
        Ok(())
    })();
    if let Err(e) = result {
        for path in &written {
            let _ = std::fs::remove_file(path);
        }
        return Err(e);
    }
    Ok(())
}

fn persist(path: PathBuf, bytes: &[u8], written: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(&path, bytes)?;
    written.push(path);
    Ok(())
}

/// Human-readable run summary as an aligned text table.
pub fn summary_text(output: &PipelineOutput) -> String {
    let mut s = String::new();
    let sil = &output.silhouette;
    let push = |s: &mut String, key: &str, value: String| {
        s.push_str(&format!("{key:<22}{value}\n"));
    };
    push(&mut s, "units", output.unit_ids.len().to_string());
    push(&mut s, "sampled", output.sample.len().to_string());
    push(&mut s, "clusters (k)", output.k_used.to_string());
    push(
        &mut s,
        "overall silhouette",
        format!("{:.4} ({}, {})", sil.overall_mean, sil.variant.as_str(), sil.measure),
    );
    push(&mut s, "singleton clusters", sil.singleton_count.to_string());
    push(
        &mut s,
        "max/median size",
        format!("{:.2}", sil.max_over_median_size),
    );
    s.push('\n');
    s.push_str(&format!("{:>8}  {:>6}  {:>10}\n", "cluster", "size", "mean s"));
    for (c, size) in sil.cluster_sizes.iter().enumerate() {
        let mean = sil.per_cluster_mean[c]
            .map_or("-".to_string(), |v| format!("{v:.4}"));
        s.push_str(&format!("{c:>8}  {size:>6}  {mean:>10}\n"));
    }
    s
}
