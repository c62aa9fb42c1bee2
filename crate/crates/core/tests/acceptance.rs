//! Release gates for the whole pipeline, run as a plain binary (no libtest
//! harness) so each gate prints exactly one `[PASS]`/`[FAIL]` line.
//!
//! Every gate is deterministic: instances and replication counts are pinned
//! by seed, and the pass thresholds below were set against independently
//! computed references before being frozen here. Timing gates run the same
//! optimized profile as the rest of the test suite.
//!
//! Run a single gate by number: `cargo test --test acceptance -- 5`.

use ndarray::Array2;
use phenoclust::assign::assign_remaining;
use phenoclust::ingest::{Cell, ColumnKind, FeatureTable};
use phenoclust::pipeline::{
    run_bench, run_pipeline_on, table_digest, AlgorithmKind, BenchOptions, RunConfig,
};
use phenoclust::sampling::{
    hajek_estimate, ht_estimate, inclusion_probabilities, pivotal_sample,
};
use phenoclust::simgraph::{similarity_matrix, DistanceMeasure, SimilarityMatrix};
use phenoclust::spectral::{
    eigengap_estimate_k, laplacian, smallest_eigenpairs, ClusterAssignment, LaplacianKind,
    Provenance,
};
use phenoclust::synth::{blobs, BlobSpec, Noise};
use phenoclust::validate::{silhouette, SilhouetteVariant};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::time::Instant;

type Gate = fn() -> Result<(), String>;

fn main() {
    let only: Option<usize> = std::env::args().nth(1).and_then(|a| a.parse().ok());
    let gates: [(&str, Gate); 11] = [
        ("pivotal samples always have exact size", gate_fixed_size),
        ("empirical inclusion frequencies match the design", gate_inclusion_fidelity),
        ("total estimators are unbiased on a skewed trait", gate_estimator_bias),
        ("laplacian spectra behave as constructed", gate_laplacian_correctness),
        ("eigengap recovers the planted cluster count", gate_eigengap),
        ("sampled spectral clustering wins the quality grid", gate_quality_grid),
        ("heavy tails skew hierarchical, not spectral, output", gate_skew_pathology),
        ("silhouette matches a brute-force oracle", gate_silhouette_oracle),
        ("sampled pipeline beats full hierarchical wall time", gate_wall_time),
        ("reverse mapping sends held-out units home", gate_reverse_mapping),
        ("bench artifacts are byte-identical across runs", gate_determinism),
    ];

    let mut failed = 0usize;
    for (idx, (label, gate)) in gates.iter().enumerate() {
        let number = idx + 1;
        if let Some(pick) = only {
            if pick != number {
                continue;
            }
        }
        let start = Instant::now();
        match gate() {
            Ok(()) => {
                println!("[PASS] {number:>2}. {label} ({:.1}s)", start.elapsed().as_secs_f64());
            }
            Err(why) => {
                failed += 1;
                println!(
                    "[FAIL] {number:>2}. {label}: {why} ({:.1}s)",
                    start.elapsed().as_secs_f64()
                );
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} gate(s) failed");
        std::process::exit(1);
    }
}

fn ensure(cond: bool, why: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(why())
    }
}

fn table_from_matrix(rows: &Array2<f64>) -> FeatureTable {
    let (n, m) = (rows.nrows(), rows.ncols());
    FeatureTable {
        unit_ids: (0..n).map(|i| format!("g{i}")).collect(),
        columns: (0..m).map(|j| (format!("t{j}"), ColumnKind::Numeric)).collect(),
        cells: (0..n)
            .map(|i| (0..m).map(|j| Cell::Number(rows[(i, j)])).collect())
            .collect(),
    }
}

/// Shared grid cell: pivotal sampling, fixed k=10, euclidean similarity.
fn grid_config(sample_size: usize, seed: u64) -> RunConfig {
    RunConfig {
        sample_size,
        k: Some(10),
        measure: DistanceMeasure::Euclidean,
        seed,
        ..RunConfig::default()
    }
}

fn grid_blobs(k: usize, separation: f64, noise: Noise, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let spec = BlobSpec { n: 2400, m: 8, k, separation, sigma: 0.5, noise };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    blobs(&spec, &mut rng)
}

// --- gate 1: every pivotal draw has cardinality exactly N ------------------

fn gate_fixed_size() -> Result<(), String> {
    const BUDGET_SECS: f64 = 10.0;
    let start = Instant::now();
    let mut plan_rng = ChaCha8Rng::seed_from_u64(2024);
    for plan_idx in 0..20u64 {
        let n = plan_rng.random_range(20..=400usize);
        let target = plan_rng.random_range(2..=n / 4);
        // wide deviation spread so some units hit the pi = 1 cap
        let devs: Vec<f64> = (0..n).map(|_| plan_rng.random_range(1e-4..8.0)).collect();
        let plan = inclusion_probabilities(&devs, target, 5).map_err(|e| e.to_string())?;
        for seed in 0..1000u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(plan_idx * 10_000 + seed);
            let sample = pivotal_sample(&plan, &mut rng);
            if sample.indices.len() != target {
                return Err(format!(
                    "plan {plan_idx} (n={n}, N={target}) seed {seed}: drew {} units",
                    sample.indices.len()
                ));
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    ensure(elapsed < BUDGET_SECS, || {
        format!("20,000 draws took {elapsed:.1}s (budget {BUDGET_SECS}s)")
    })
}

// --- gate 2: empirical inclusion frequencies within 3 MC standard errors ---

fn gate_inclusion_fidelity() -> Result<(), String> {
    const REPS: usize = 20_000;
    const BUDGET_SECS: f64 = 60.0;
    let start = Instant::now();
    let n = 50;
    let mut dev_rng = ChaCha8Rng::seed_from_u64(42);
    let devs: Vec<f64> = (0..n).map(|_| dev_rng.random_range(0.05..3.0)).collect();
    let plan = inclusion_probabilities(&devs, 10, 5).map_err(|e| e.to_string())?;

    let mut counts = vec![0usize; n];
    for rep in 0..REPS {
        let mut rng = ChaCha8Rng::seed_from_u64(1_000_000 + rep as u64);
        for &i in &pivotal_sample(&plan, &mut rng).indices {
            counts[i] += 1;
        }
    }
    for (i, (&pi, &count)) in plan.probabilities.iter().zip(&counts).enumerate() {
        let freq = count as f64 / REPS as f64;
        let se = (pi * (1.0 - pi) / REPS as f64).sqrt().max(1e-12);
        let z = (freq - pi).abs() / se;
        if z > 3.0 {
            return Err(format!("unit {i}: freq {freq:.5} vs pi {pi:.5} is {z:.2} SEs off"));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    ensure(elapsed < BUDGET_SECS, || {
        format!("{REPS} replications took {elapsed:.1}s (budget {BUDGET_SECS}s)")
    })
}

// --- gate 3: HT within 1% and Hajek within 2% of a skewed actual total -----

fn gate_estimator_bias() -> Result<(), String> {
    const REPS: usize = 20_000;
    const BUDGET_SECS: f64 = 60.0;
    let start = Instant::now();
    let n = 200;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let devs: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..2.0)).collect();
    // lognormal-shaped trait: a few units dominate the total
    let values: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = rng.random_range(-1.0..1.0) + rng.random_range(-1.0..1.0);
            (1.5 * z).exp() * 10.0
        })
        .collect();
    let actual: f64 = values.iter().sum();
    let plan = inclusion_probabilities(&devs, 30, 5).map_err(|e| e.to_string())?;

    let (mut ht_sum, mut hajek_sum) = (0.0f64, 0.0f64);
    for rep in 0..REPS {
        let mut r = ChaCha8Rng::seed_from_u64(rep as u64);
        let sample = pivotal_sample(&plan, &mut r);
        let drawn: Vec<f64> = sample.indices.iter().map(|&i| values[i]).collect();
        ht_sum += ht_estimate(&drawn, &plan, &sample).map_err(|e| e.to_string())?;
        hajek_sum += hajek_estimate(&drawn, &plan, &sample, n).map_err(|e| e.to_string())?;
    }
    let ht_err = (ht_sum / REPS as f64 - actual).abs() / actual;
    let hajek_err = (hajek_sum / REPS as f64 - actual).abs() / actual;
    ensure(ht_err < 0.01, || format!("HT relative bias {:.3}% >= 1%", ht_err * 100.0))?;
    ensure(hajek_err < 0.02, || format!("Hajek relative bias {:.3}% >= 2%", hajek_err * 100.0))?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(elapsed < BUDGET_SECS, || {
        format!("{REPS} replications took {elapsed:.1}s (budget {BUDGET_SECS}s)")
    })
}

// --- gate 4: spectra of all three laplacian variants ------------------------

fn gate_laplacian_correctness() -> Result<(), String> {
    let n = 40;
    let mut rng = ChaCha8Rng::seed_from_u64(4242);

    for case in 0..100 {
        let mut w = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..i {
                let v = rng.random_range(0.01..1.0);
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
            w[(i, i)] = 1.0;
        }
        let sim = SimilarityMatrix { values: w, measure: DistanceMeasure::Euclidean };

        let lap1 = laplacian(&sim, LaplacianKind::Type1);
        let min_eig = smallest_eigenpairs(&lap1, 1).map_err(|e| e.to_string())?.eigenvalues[0];
        ensure(min_eig >= -1e-9, || {
            format!("case {case}: unnormalized laplacian has eigenvalue {min_eig:.3e}")
        })?;

        let e2 = smallest_eigenpairs(&laplacian(&sim, LaplacianKind::Type2), n)
            .map_err(|e| e.to_string())?
            .eigenvalues;
        let e3 = smallest_eigenpairs(&laplacian(&sim, LaplacianKind::Type3), n)
            .map_err(|e| e.to_string())?
            .eigenvalues;
        for i in 0..n {
            let gap = (e2[i] - e3[i]).abs();
            if gap > 1e-8 {
                return Err(format!(
                    "case {case}: symmetric/random-walk spectra differ by {gap:.3e} at rank {i}"
                ));
            }
        }
    }

    // zero-eigenvalue multiplicity equals the number of disconnected blocks
    for components in 1..=5usize {
        for draw in 0..3 {
            let mut w = Array2::<f64>::zeros((n, n));
            let base = n / components;
            let extra = n % components;
            let mut begin = 0;
            for c in 0..components {
                let size = base + usize::from(c < extra);
                for i in begin..begin + size {
                    for j in begin..i {
                        let v = rng.random_range(0.5..1.0);
                        w[(i, j)] = v;
                        w[(j, i)] = v;
                    }
                    w[(i, i)] = 1.0;
                }
                begin += size;
            }
            let sim = SimilarityMatrix { values: w, measure: DistanceMeasure::Euclidean };
            for kind in [LaplacianKind::Type1, LaplacianKind::Type2] {
                let evals = smallest_eigenpairs(&laplacian(&sim, kind), n)
                    .map_err(|e| e.to_string())?
                    .eigenvalues;
                let zeros = evals.iter().filter(|&&v| v.abs() < 1e-8).count();
                ensure(zeros == components, || {
                    format!(
                        "{components} blocks, draw {draw}, {}: zero multiplicity {zeros}",
                        kind.as_str()
                    )
                })?;
                ensure(evals[components] > 1e-6, || {
                    format!(
                        "{components} blocks, draw {draw}, {}: no spectral gap after the nullspace",
                        kind.as_str()
                    )
                })?;
            }
        }
    }
    Ok(())
}

// --- gate 5: eigengap finds the planted k in >= 95 of 100 runs -------------

fn gate_eigengap() -> Result<(), String> {
    for &k in &[2usize, 3, 5, 10] {
        let k_max = if k < 8 { 15 } else { 20 };
        let mut hits = 0;
        for seed in 0..100u64 {
            let spec = BlobSpec {
                n: 30 * k,
                m: 8,
                k,
                separation: 6.0,
                sigma: 0.5,
                noise: Noise::Gaussian,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (rows, _) = blobs(&spec, &mut rng);
            let sim = similarity_matrix(rows.view(), DistanceMeasure::Euclidean)
                .map_err(|e| e.to_string())?;
            let lap = laplacian(&sim, LaplacianKind::Type3);
            let emb = smallest_eigenpairs(&lap, k_max).map_err(|e| e.to_string())?;
            let found =
                eigengap_estimate_k(&emb.eigenvalues, k_max).map_err(|e| e.to_string())?;
            if found == k {
                hits += 1;
            }
        }
        ensure(hits >= 95, || format!("planted k={k}: only {hits}/100 recovered"))?;
    }
    Ok(())
}

// --- gate 6: seed-matched quality grid + exact recovery ---------------------

/// Remap `labels` through the permutation implied by majority vote against
/// `truth`; Some(mismatches) when the vote is a bijection.
fn permutation_mismatches(labels: &[usize], truth: &[usize], k: usize) -> Option<usize> {
    let mut votes = vec![vec![0usize; k]; k];
    for (&f, &t) in labels.iter().zip(truth) {
        votes[f][t] += 1;
    }
    let mut map = vec![usize::MAX; k];
    let mut taken = vec![false; k];
    for f in 0..k {
        let best = (0..k).max_by_key(|&t| votes[f][t])?;
        if taken[best] {
            return None;
        }
        taken[best] = true;
        map[f] = best;
    }
    Some(labels.iter().zip(truth).filter(|&(&f, &t)| map[f] != t).count())
}

fn gate_quality_grid() -> Result<(), String> {
    const SEEDS: u64 = 20;
    const MARGIN: f64 = 0.02;

    // aggregate silhouette: pivotal+spectral vs the three other grid cells
    let mut sums = [0.0f64; 4];
    for seed in 0..SEEDS {
        let (rows, _) = grid_blobs(10, 6.0, Noise::Gaussian, 1000 + seed);
        let table = table_from_matrix(&rows);
        let digest = table_digest(&table);
        let config = grid_config(500, seed);
        let report = run_bench(&config, &table, &digest, &BenchOptions::default())
            .map_err(|e| e.to_string())?;
        ensure(report.rows.len() == 4, || "bench grid is not 2x2".to_string())?;
        for (slot, row) in report.rows.iter().enumerate() {
            sums[slot] += row.overall_silhouette;
        }
    }
    let means: Vec<f64> = sums.iter().map(|s| s / SEEDS as f64).collect();
    for other in 1..4 {
        ensure(means[0] >= means[other] - MARGIN, || {
            format!(
                "pivotal+spectral mean {:.4} under cell {other} mean {:.4} by more than {MARGIN}",
                means[0], means[other]
            )
        })?;
    }

    // a widely separated instance must be recovered exactly, up to relabeling
    for seed in 0..3u64 {
        let (rows, truth) = grid_blobs(10, 12.0, Noise::Gaussian, 500 + seed);
        let table = table_from_matrix(&rows);
        let digest = table_digest(&table);
        let out = run_pipeline_on(&grid_config(500, seed), &table, &digest)
            .map_err(|e| e.to_string())?;
        match permutation_mismatches(&out.assignment.labels, &truth, 10) {
            Some(0) => {}
            Some(m) => return Err(format!("seed {seed}: {m} units off the planted partition")),
            None => return Err(format!("seed {seed}: clusters do not map 1:1 onto blobs")),
        }
    }
    Ok(())
}

// --- gate 7: heavy-tailed noise breaks hierarchical, not spectral ----------

fn gate_skew_pathology() -> Result<(), String> {
    let mut hierarchical_singletons = 0usize;
    for seed in 0..5u64 {
        let (rows, _) = grid_blobs(10, 6.0, Noise::HeavyTailed, 300 + seed);
        let table = table_from_matrix(&rows);
        let digest = table_digest(&table);

        let spectral_cfg = grid_config(500, seed);
        let mut hierarchical_cfg = spectral_cfg.clone();
        hierarchical_cfg.algorithm = AlgorithmKind::Hierarchical;
        let sp = run_pipeline_on(&spectral_cfg, &table, &digest).map_err(|e| e.to_string())?;
        let hc =
            run_pipeline_on(&hierarchical_cfg, &table, &digest).map_err(|e| e.to_string())?;

        ensure(
            hc.silhouette.max_over_median_size > sp.silhouette.max_over_median_size,
            || {
                format!(
                    "seed {seed}: hierarchical max/median {:.2} <= spectral {:.2}",
                    hc.silhouette.max_over_median_size, sp.silhouette.max_over_median_size
                )
            },
        )?;
        let actual_singletons =
            hc.silhouette.cluster_sizes.iter().filter(|&&s| s == 1).count();
        ensure(hc.silhouette.singleton_count == actual_singletons, || {
            format!(
                "seed {seed}: report flags {} singletons, sizes say {actual_singletons}",
                hc.silhouette.singleton_count
            )
        })?;
        hierarchical_singletons += actual_singletons;
    }
    ensure(hierarchical_singletons > 0, || {
        "hierarchical clustering produced no singleton clusters on any seed".to_string()
    })?;

    // balanced planted data keeps spectral cluster sizes within 3x
    for seed in 0..3u64 {
        let (rows, _) = grid_blobs(10, 6.0, Noise::Gaussian, 700 + seed);
        let table = table_from_matrix(&rows);
        let digest = table_digest(&table);
        let out =
            run_pipeline_on(&grid_config(500, seed), &table, &digest).map_err(|e| e.to_string())?;
        let sizes: Vec<usize> =
            out.silhouette.cluster_sizes.iter().copied().filter(|&s| s > 0).collect();
        let largest = *sizes.iter().max().unwrap() as f64;
        let smallest = *sizes.iter().min().unwrap() as f64;
        ensure(largest / smallest <= 3.0, || {
            format!("seed {seed}: spectral cluster sizes spread {:.2}x", largest / smallest)
        })?;
    }
    Ok(())
}

// --- gate 8: silhouette equals a brute-force oracle to 1e-12 ----------------

fn oracle_distance(a: &[f64], b: &[f64], cityblock: bool) -> f64 {
    if cityblock {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    } else {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }
}

fn oracle_silhouette(
    points: &[Vec<f64>],
    labels: &[usize],
    cityblock: bool,
    pooled: bool,
) -> Vec<f64> {
    let n = points.len();
    let k = labels.iter().max().unwrap() + 1;
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    (0..n)
        .map(|i| {
            // per-cluster sums accumulated in index order, as the library does
            let mut sums = vec![0.0f64; k];
            for j in 0..n {
                if j != i {
                    sums[labels[j]] += oracle_distance(&points[i], &points[j], cityblock);
                }
            }
            let own = labels[i];
            let a = if sizes[own] > 1 { sums[own] / (sizes[own] - 1) as f64 } else { 0.0 };
            let b = if pooled {
                let outside: usize = sizes.iter().sum::<usize>() - sizes[own];
                let total: f64 = sums.iter().enumerate().filter(|&(c, _)| c != own).map(|(_, s)| s).sum();
                if outside > 0 { total / outside as f64 } else { 0.0 }
            } else {
                (0..k)
                    .filter(|&c| c != own && sizes[c] > 0)
                    .map(|c| sums[c] / sizes[c] as f64)
                    .fold(f64::INFINITY, f64::min)
            };
            let denom = a.max(b);
            if denom == 0.0 { 0.0 } else { (b - a) / denom }
        })
        .collect()
}

fn gate_silhouette_oracle() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    for case in 0..50 {
        let n = rng.random_range(8..=200usize);
        let m = rng.random_range(2..=6usize);
        let k = rng.random_range(2..=5usize);
        let points: Vec<Vec<f64>> =
            (0..n).map(|_| (0..m).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let mut labels: Vec<usize> =
            (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
        if case % 3 == 0 {
            labels[n - 1] = k; // guaranteed singleton cluster
        }
        if case == 7 {
            // hole in the label range: cluster 1 left empty
            labels = labels.iter().map(|&l| if l == 0 { 0 } else { 2 }).collect();
        }
        let cityblock = case % 2 == 1;
        let measure =
            if cityblock { DistanceMeasure::CityBlock } else { DistanceMeasure::Euclidean };
        let mut rows = Array2::<f64>::zeros((n, m));
        for (i, p) in points.iter().enumerate() {
            for (j, &v) in p.iter().enumerate() {
                rows[(i, j)] = v;
            }
        }

        for (variant, pooled) in
            [(SilhouetteVariant::PooledOthers, true), (SilhouetteVariant::ClassicalNearest, false)]
        {
            let report = silhouette(rows.view(), &labels, measure, variant)
                .map_err(|e| e.to_string())?;
            let expected = oracle_silhouette(&points, &labels, cityblock, pooled);
            for (i, (&got, &want)) in report.per_point.iter().zip(&expected).enumerate() {
                if (got - want).abs() > 1e-12 {
                    return Err(format!(
                        "case {case} ({variant:?}) point {i}: library {got:.15} vs oracle {want:.15}"
                    ));
                }
            }
            if case % 3 == 0 {
                ensure((report.per_point[n - 1] - 1.0).abs() < 1e-12, || {
                    format!("case {case}: singleton scored {}", report.per_point[n - 1])
                })?;
            }
        }
    }
    Ok(())
}

// --- gate 9: sampled pipeline within a fifth of full hierarchical time -----

fn gate_wall_time() -> Result<(), String> {
    const MAX_RATIO: f64 = 0.2;
    let (rows, _) = grid_blobs(10, 6.0, Noise::Gaussian, 11);
    let table = table_from_matrix(&rows);
    let digest = table_digest(&table);
    let config = grid_config(500, 0);
    let report = run_bench(
        &config,
        &table,
        &digest,
        &BenchOptions { baseline: true, timing_repeats: 5 },
    )
    .map_err(|e| e.to_string())?;

    let ratio = report
        .manifest
        .sampled_over_full_hc_wall_ratio
        .ok_or("bench manifest is missing the wall-time ratio")?;
    ensure(ratio <= MAX_RATIO, || {
        format!("sampled/full wall-time ratio {ratio:.3} > {MAX_RATIO}")
    })?;

    // the ratio must survive into the written manifest
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    phenoclust::pipeline::write_bench_artifacts(&report, dir.path())
        .map_err(|e| e.to_string())?;
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("manifest.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let recorded = manifest["sampled_over_full_hc_wall_ratio"]
        .as_f64()
        .ok_or("manifest.json lacks sampled_over_full_hc_wall_ratio")?;
    ensure((recorded - ratio).abs() < 1e-12, || {
        format!("written ratio {recorded} differs from computed {ratio}")
    })
}

// --- gate 10: reverse mapping lands >= 99% of held-out units correctly -----

fn gate_reverse_mapping() -> Result<(), String> {
    for seed in 0..6u64 {
        let spec =
            BlobSpec { n: 600, m: 8, k: 3, separation: 6.0, sigma: 0.5, noise: Noise::Gaussian };
        let mut rng = ChaCha8Rng::seed_from_u64(40 + seed);
        let (rows, truth) = blobs(&spec, &mut rng);

        // hold out a random half; the sampled half keeps its planted labels
        let mut order: Vec<usize> = (0..600).collect();
        order.shuffle(&mut rng);
        let mut sample: Vec<usize> = order[..300].to_vec();
        sample.sort_unstable();
        let sampled = ClusterAssignment {
            labels: sample.iter().map(|&i| truth[i]).collect(),
            k: 3,
            provenance: vec![Provenance::Sampled; 300],
        };

        let (full, _) =
            assign_remaining(rows.view(), &sample, &sampled, DistanceMeasure::Euclidean)
                .map_err(|e| e.to_string())?;
        let wrong = (0..600)
            .filter(|&i| sample.binary_search(&i).is_err() && full.labels[i] != truth[i])
            .count();
        ensure(wrong * 100 <= 300, || {
            format!("seed {seed}: {wrong}/300 held-out units misassigned (> 1%)")
        })?;
    }
    Ok(())
}

// --- gate 11: bench artifacts byte-identical across parallelism settings ---

fn collect_artifacts(root: &Path, rel: &Path, into: &mut Vec<std::path::PathBuf>) -> Result<(), String> {
    let dir = root.join(rel);
    for entry in std::fs::read_dir(&dir).map_err(|e| format!("{}: {e}", dir.display()))? {
        let entry = entry.map_err(|e| e.to_string())?;
        let sub = rel.join(entry.file_name());
        if entry.file_type().map_err(|e| e.to_string())?.is_dir() {
            collect_artifacts(root, &sub, into)?;
        } else if entry.file_name() != "manifest.json" {
            // manifests carry wall-clock timings and are compared by digest instead
            into.push(sub);
        }
    }
    Ok(())
}

fn gate_determinism() -> Result<(), String> {
    let bin = env!("CARGO_BIN_EXE_phenoclust");
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data_dir = root.path().join("data");

    let synth = std::process::Command::new(bin)
        .args(["synth", "--n", "600", "--m", "6", "--k", "3", "--separation", "8.0"])
        .args(["--sigma", "0.5", "--seed", "5"])
        .arg("--output-dir")
        .arg(&data_dir)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(synth.status.success(), || {
        format!("synth failed: {}", String::from_utf8_lossy(&synth.stderr))
    })?;

    let config_path = root.path().join("run.conf");
    std::fs::write(
        &config_path,
        format!(
            "input={}\nsample_size=150\nk=3\nmeasure=euclidean\nseed=9\n",
            data_dir.join("data.csv").display()
        ),
    )
    .map_err(|e| e.to_string())?;

    let out_dirs = [root.path().join("run_a"), root.path().join("run_b")];
    for (dir, threads) in out_dirs.iter().zip(["1", "4"]) {
        let run = std::process::Command::new(bin)
            .arg("bench")
            .arg("--config")
            .arg(&config_path)
            .arg("--set")
            .arg(format!("output_dir={}", dir.display()))
            .env("RAYON_NUM_THREADS", threads)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(run.status.success(), || {
            format!(
                "bench with {threads} thread(s) failed: {}",
                String::from_utf8_lossy(&run.stderr)
            )
        })?;
    }

    let mut trees: Vec<Vec<std::path::PathBuf>> = Vec::new();
    for dir in &out_dirs {
        let mut files = Vec::new();
        collect_artifacts(dir, Path::new(""), &mut files)?;
        files.sort();
        ensure(!files.is_empty(), || format!("{} holds no artifacts", dir.display()))?;
        trees.push(files);
    }
    ensure(trees[0] == trees[1], || {
        format!("artifact trees differ: {:?} vs {:?}", trees[0], trees[1])
    })?;
    for rel in &trees[0] {
        let a = std::fs::read(out_dirs[0].join(rel)).map_err(|e| e.to_string())?;
        let b = std::fs::read(out_dirs[1].join(rel)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{} differs between 1 and 4 rayon threads", rel.display()))?;
    }
    Ok(())
}
