//! `tbnn`: builds sheaves from point clouds, computes spectra and runs the
//! denoising, convergence and spectral experiments.
//!
//! Exit status: 0 on success, 2 for configuration or usage errors, 3 when a
//! numerical step fails, 1 for anything else (for example I/O).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tbnn_core::experiments::{
    run_convergence, run_denoise, run_spectral_convergence, run_table1, write_meta, ExperimentConfig,
};
use tbnn_core::sheaf::{load_sheaf, save_sheaf};
use tbnn_core::{build_sheaf, eigendecompose, sample_sphere, Error, PointCloud, SheafParams};

#[derive(Parser)]
#[command(name = "tbnn", version, about = "Tangent bundle filters and neural networks on point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the orthogonal sheaf of a point cloud and save it.
    BuildSheaf {
        /// A CSV of points (header row, one point per row) or `sphere:<n>`.
        #[arg(long)]
        input: String,
        /// Seed for sampled inputs; recorded as provenance for CSV inputs.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        epsilon_pca: Option<f64>,
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
    },
    /// Lowest eigenpairs of a saved sheaf's Laplacian.
    Spectrum {
        #[arg(long)]
        sheaf: PathBuf,
        /// Number of eigenpairs; all of them when omitted.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the bundle network denoiser over the configured grid.
    Denoise(ExperimentArgs),
    /// Bundle network against the scalar baseline over the configured grid.
    Table1(ExperimentArgs),
    /// Convergence of a fixed network's output under refinement.
    Converge(ExperimentArgs),
    /// Lowest eigenvalues of the sphere's sheaf Laplacian across sample sizes.
    SpectralConverge(ExperimentArgs),
}

#[derive(clap::Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; falls back to `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ExperimentArgs {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf), Error> {
        let cfg = ExperimentConfig::load(&self.config)?;
        let out = self
            .out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .ok_or_else(|| Error::Config("no output directory: pass --out or set output_dir".into()))?;
        Ok((cfg, out))
    }
}

fn git_hash() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

fn read_input(input: &str, seed: u64) -> Result<PointCloud, Error> {
    match input.strip_prefix("sphere:") {
        Some(n) => {
            let n = n
                .parse()
                .map_err(|_| Error::Config(format!("bad sphere size in {input:?}")))?;
            sample_sphere(n, seed)
        }
        None => {
            let cloud = PointCloud::read_csv(input)?;
            PointCloud::new(cloud.points().clone(), seed, cloud.manifold())
        }
    }
}

/// Numerical failures inside individual trials are recorded in the result
/// files; they still make the run exit with the numerical-failure status.
fn trials_failed(count: usize, what: &str) -> Result<(), Error> {
    if count == 0 {
        Ok(())
    } else {
        Err(Error::ConvergenceFailure(format!("{count} {what} failed; see the error column")))
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::BuildSheaf {
            input,
            seed,
            out,
            epsilon,
            epsilon_pca,
            gamma,
        } => {
            let cloud = read_input(&input, seed)?;
            let params = SheafParams {
                epsilon,
                epsilon_pca,
                gamma,
            };
            let sheaf = build_sheaf(&cloud, &params)?;
            save_sheaf(&sheaf, &out)?;
            cloud.write_csv(out.join("points.csv"))?;
            println!(
                "n={} d_hat={} epsilon={:.6} edges={} -> {}",
                sheaf.node_count(),
                sheaf.d_hat(),
                sheaf.epsilon(),
                sheaf.graph().edge_count(),
                out.display()
            );
        }
        Command::Spectrum { sheaf, k, out } => {
            let sheaf = load_sheaf(&sheaf)?;
            let spectrum = eigendecompose(&sheaf, k)?;
            spectrum.write(&out)?;
            println!("{} eigenpairs -> {}", spectrum.len(), out.display());
        }
        Command::Denoise(args) => {
            let (cfg, out) = args.load()?;
            let result = run_denoise(&cfg, Some(&out.join("models")))?;
            finish(&out, "denoise", &cfg)?;
            result.write(&out)?;
            trials_failed(result.rows.iter().filter(|r| r.error.is_some()).count(), "trials")?;
        }
        Command::Table1(args) => {
            let (cfg, out) = args.load()?;
            let result = run_table1(&cfg)?;
            finish(&out, "table1", &cfg)?;
            result.write(&out)?;
            for c in &result.summary {
                println!(
                    "n={:<5} tau={:<6} {:<6} mean={} std={}",
                    c.n,
                    c.tau,
                    c.model.to_string(),
                    c.mean.map_or("-".into(), |m| format!("{m:.3e}")),
                    c.std.map_or("-".into(), |s| format!("{s:.2e}")),
                );
            }
            trials_failed(result.rows.iter().filter(|r| r.error.is_some()).count(), "trials")?;
        }
        Command::Converge(args) => {
            let (cfg, out) = args.load()?;
            let result = run_convergence(&cfg)?;
            finish(&out, "converge", &cfg)?;
            result.write(&out)?;
            for p in &result.points {
                println!("n={:<5} median discrepancy={}", p.n, p.median.map_or("-".into(), |m| format!("{m:.3e}")));
            }
            trials_failed(result.rows.iter().filter(|r| r.error.is_some()).count(), "sample sizes")?;
        }
        Command::SpectralConverge(args) => {
            let (cfg, out) = args.load()?;
            let result = run_spectral_convergence(&cfg)?;
            finish(&out, "spectral-converge", &cfg)?;
            result.write(&out)?;
            for s in &result.summary {
                println!(
                    "n={:<5} l1 spread={} cluster ratio={}",
                    s.n,
                    s.mean_l1_spread.map_or("-".into(), |v| format!("{v:.3}")),
                    s.mean_cluster_ratio.map_or("-".into(), |v| format!("{v:.3}")),
                );
            }
            trials_failed(result.runs.iter().filter(|r| r.error.is_some()).count(), "runs")?;
        }
    }
    Ok(())
}

fn finish(out: &Path, experiment: &str, cfg: &ExperimentConfig) -> Result<(), Error> {
    write_meta(out, experiment, cfg, &git_hash())
}

fn exit_code(err: &Error) -> u8 {
    if err.is_numeric() {
        3
    } else if matches!(err, Error::Config(_) | Error::Parse { .. } | Error::InvalidArgument(_)) {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
