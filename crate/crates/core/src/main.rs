//! Batch CLI over the clustering pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;

use phenoclust::error::{Error, Result};
use phenoclust::pipeline::{
    emit_eigenvalue_plotdata_on, load_input, run_bench, run_estimator_audit_on, run_pipeline_on,
    summary_text, write_artifacts, write_bench_artifacts, write_eigenvalues_csv,
    write_estimators_csv, BenchOptions, RunConfig,
};
use phenoclust::synth::{blobs, BlobSpec, Noise};

#[derive(Parser)]
#[command(
    name = "phenoclust",
    version,
    about = "Sampling-accelerated spectral clustering for tabular trait data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write assignment, silhouette and manifest artifacts
    Cluster(ConfigArgs),
    /// Estimate population totals of numeric traits from a pivotal sample
    Audit {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated trait names to audit
        #[arg(long, value_delimiter = ',', required = true)]
        traits: Vec<String>,
    },
    /// Emit the smallest eigenvalues of the configured Laplacian
    Eigs {
        #[command(flatten)]
        config: ConfigArgs,
        /// How many of the smallest eigenvalues to write
        #[arg(long, default_value_t = 50)]
        count: usize,
    },
    /// Run the sampler × algorithm comparison grid with one seed
    Bench {
        #[command(flatten)]
        config: ConfigArgs,
        /// Also time the unsampled hierarchical baseline and report the ratio
        #[arg(long)]
        baseline: bool,
        /// Repetitions for the timing comparison (median is reported)
        #[arg(long, default_value_t = 1)]
        timing_repeats: usize,
    },
    /// Generate a synthetic blob dataset (data.csv + labels.csv)
    Synth(SynthArgs),
}

/// Config file plus flag overrides; flags win over file keys.
#[derive(Args)]
struct ConfigArgs {
    /// Flat key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra key=value override, repeatable (e.g. --set preshuffle=true)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    input: Option<PathBuf>,
    /// pivotal | vq | none
    #[arg(long)]
    sampler: Option<String>,
    #[arg(long)]
    sample_size: Option<usize>,
    /// spectral | hierarchical
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    measure: Option<String>,
    /// type1 | type2 | type3
    #[arg(long)]
    laplacian: Option<String>,
    /// single | complete | average | ward
    #[arg(long)]
    linkage: Option<String>,
    /// Cluster count, or "auto" for eigengap selection
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// pooled | classical
    #[arg(long)]
    silhouette: Option<String>,
    /// Normalize embedding rows before k-means
    #[arg(long)]
    row_normalize: bool,
    /// Shuffle unit order before the pivotal scan
    #[arg(long)]
    preshuffle: bool,
    /// naive | nn_chain
    #[arg(long)]
    hclust_algorithm: Option<String>,
    /// Write the agglomeration history (hierarchical runs)
    #[arg(long)]
    dump_merges: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        for pair in &self.set {
            let (key, value) = pair.split_once('=').ok_or_else(|| {
                Error::Config(format!("--set expects key=value, got {pair:?}"))
            })?;
            config.set(key.trim(), value.trim())?;
        }
        if let Some(v) = &self.input {
            config.input = v.clone();
        }
        if let Some(v) = &self.sampler {
            config.set("sampler", v)?;
        }
        if let Some(v) = self.sample_size {
            config.sample_size = v;
        }
        if let Some(v) = &self.algorithm {
            config.set("algorithm", v)?;
        }
        if let Some(v) = &self.measure {
            config.set("measure", v)?;
        }
        if let Some(v) = &self.laplacian {
            config.set("laplacian", v)?;
        }
        if let Some(v) = &self.linkage {
            config.set("linkage", v)?;
        }
        if let Some(v) = &self.k {
            config.set("k", v)?;
        }
        if let Some(v) = self.k_max {
            config.k_max = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.restarts {
            config.restarts = v;
        }
        if let Some(v) = &self.output_dir {
            config.output_dir = v.clone();
        }
        if let Some(v) = &self.silhouette {
            config.set("silhouette", v)?;
        }
        if self.row_normalize {
            config.row_normalize = true;
        }
        if self.preshuffle {
            config.preshuffle = true;
        }
        if let Some(v) = &self.hclust_algorithm {
            config.set("hclust_algorithm", v)?;
        }
        if self.dump_merges {
            config.dump_merges = true;
        }
        Ok(config)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 2400)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    m: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Center separation in units of sigma
    #[arg(long, default_value_t = 8.0)]
    separation: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// gaussian | heavy_tailed
    #[arg(long, default_value = "gaussian")]
    noise: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    output_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Cluster(args) => {
            let config = args.resolve()?;
            let (table, digest) = load_input(&config)?;
            let output = run_pipeline_on(&config, &table, &digest)?;
            for warning in &output.warnings {
                eprintln!("warning: {warning}");
            }
            let dir = config.effective_output_dir();
            write_artifacts(&output, &dir)?;
            print!("{}", summary_text(&output));
            println!("\nartifacts written to {}", dir.display());
            Ok(())
        }
        Command::Audit { config: args, traits } => {
            let config = args.resolve()?;
            let (table, _) = load_input(&config)?;
            let reports = run_estimator_audit_on(&config, &table, &traits)?;
            let dir = config.effective_output_dir();
            write_estimators_csv(&reports, &dir.join("estimators.csv"))?;
            println!(
                "{:<16}{:>16}{:>16}{:>16}",
                "trait", "actual", "ht", "hajek"
            );
            for r in &reports {
                println!(
                    "{:<16}{:>16.4}{:>16.4}{:>16.4}",
                    r.trait_name,
                    r.actual_total.unwrap_or(f64::NAN),
                    r.ht_estimate,
                    r.hajek_estimate
                );
            }
            Ok(())
        }
        Command::Eigs { config: args, count } => {
            let config = args.resolve()?;
            let (table, digest) = load_input(&config)?;
            let eigenvalues = emit_eigenvalue_plotdata_on(&config, &table, &digest, count)?;
            let dir = config.effective_output_dir();
            write_eigenvalues_csv(&eigenvalues, &dir.join("eigenvalues.csv"))?;
            println!("{count} eigenvalues written to {}", dir.join("eigenvalues.csv").display());
            Ok(())
        }
        Command::Bench { config: args, baseline, timing_repeats } => {
            let config = args.resolve()?;
            let (table, digest) = load_input(&config)?;
            let opts = BenchOptions { baseline, timing_repeats };
            let report = run_bench(&config, &table, &digest, &opts)?;
            let dir = config.effective_output_dir();
            write_bench_artifacts(&report, &dir)?;
            println!(
                "{:<10}{:<14}{:>6}{:>14}{:>12}{:>14}",
                "sampler", "algorithm", "k", "silhouette", "singletons", "max/median"
            );
            for row in &report.rows {
                println!(
                    "{:<10}{:<14}{:>6}{:>14.4}{:>12}{:>14.2}",
                    row.sampler.as_str(),
                    row.algorithm.as_str(),
                    row.k_used,
                    row.overall_silhouette,
                    row.singleton_count,
                    row.max_over_median_size
                );
            }
            if let Some(ratio) = report.manifest.sampled_over_full_hc_wall_ratio {
                println!("\nsampled spectral / full HC wall time: {ratio:.3}");
            }
            Ok(())
        }
        Command::Synth(args) => {
            let noise: Noise = match args.noise.as_str() {
                "gaussian" => Noise::Gaussian,
                "heavy_tailed" => Noise::HeavyTailed,
                other => {
                    return Err(Error::Config(format!(
                        "unknown noise kind {other:?}; expected gaussian or heavy_tailed"
                    )))
                }
            };
            let spec = BlobSpec {
                n: args.n,
                m: args.m,
                k: args.k,
                separation: args.separation,
                sigma: args.sigma,
                noise,
            };
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
            let (rows, labels) = blobs(&spec, &mut rng);

            std::fs::create_dir_all(&args.output_dir)?;
            let mut data = String::from("id");
            for j in 0..args.m {
                data.push_str(&format!(",t{j}"));
            }
            data.push('\n');
            for i in 0..args.n {
                data.push_str(&format!("g{i}"));
                for j in 0..args.m {
                    data.push_str(&format!(",{}", rows[(i, j)]));
                }
                data.push('\n');
            }
            std::fs::write(args.output_dir.join("data.csv"), data)?;

            let mut truth = String::from("id,cluster\n");
            for (i, label) in labels.iter().enumerate() {
                truth.push_str(&format!("g{i},{label}\n"));
            }
            std::fs::write(args.output_dir.join("labels.csv"), truth)?;
            println!(
                "wrote {} units to {}",
                args.n,
                args.output_dir.join("data.csv").display()
            );
            Ok(())
        }
    }
}
