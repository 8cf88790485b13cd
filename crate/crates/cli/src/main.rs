//! `themis`: score, threshold and evaluate a univariate series from the
//! command line.

mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use themis_core::pipeline::{cmd_detect, cmd_embed_ref, cmd_plot_data, cmd_score, cmd_sweep, PipelineError};

use settings::Settings;

#[derive(Debug, Parser)]
#[command(name = "themis", version, about = "Zero-shot time-series anomaly detection from embedding similarity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Embed, score and write scores.csv + manifest.json.
    Score(RunArgs),
    /// Score, threshold with SPOT, and evaluate against labels if given.
    Detect(RunArgs),
    /// Evaluate every point of a parameter grid; list flags take `a,b,c`.
    Sweep(RunArgs),
    /// Flatten a run directory into CSVs for plotting.
    PlotData(PlotArgs),
    /// Write reference embeddings in THEM format.
    EmbedRef(RunArgs),
}

/// Flags shared by the run commands. All are optional so that a config
/// file or a replayed manifest can fill them; flags always win.
#[derive(Debug, Args, Default)]
pub struct RunArgs {
    #[arg(long)]
    series: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Column index in the series CSV.
    #[arg(long)]
    channel: Option<String>,
    /// `csv` (one column per channel) or `nab` (timestamp,value).
    #[arg(long)]
    format: Option<String>,
    /// Precomputed embeddings (THEM file); the reference embedder is used otherwise.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Reference embedder context length.
    #[arg(long)]
    ref_context: Option<String>,
    /// Reference embedder output dimension.
    #[arg(long)]
    ref_dim: Option<String>,
    /// spectral, lof, mean or trimmed.
    #[arg(long)]
    adapter: Option<String>,
    /// Spectral eigenvectors retained.
    #[arg(long)]
    k: Option<String>,
    /// LOF neighbors.
    #[arg(long)]
    knn: Option<String>,
    /// Trimmed adapter: fraction cut from each end.
    #[arg(long)]
    alpha: Option<String>,
    /// Trimmed adapter: a count (`10`) or a fraction (`0.1`).
    #[arg(long)]
    topk: Option<String>,
    /// Window length L [default: 512].
    #[arg(long)]
    window: Option<String>,
    /// Window stride [default: window length].
    #[arg(long)]
    stride: Option<String>,
    /// Windows per similarity batch B [default: 16].
    #[arg(long)]
    batch_windows: Option<String>,
    /// batch or global [default: batch].
    #[arg(long)]
    normalize_scope: Option<String>,
    /// SPOT risk level [default: 1e-3].
    #[arg(long)]
    spot_q: Option<String>,
    /// SPOT initial quantile [default: 0.98].
    #[arg(long)]
    spot_init: Option<String>,
    /// Score file to fit the threshold on instead of the scored series.
    #[arg(long)]
    calibration_file: Option<PathBuf>,
    #[arg(long)]
    seed: Option<String>,
    /// Output directory (embed-ref: output file) [default: $THEMIS_OUT_DIR/<command>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads [default: available cores].
    #[arg(long)]
    jobs: Option<String>,
    /// Flat `key = value` file with flag names as keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the config recorded in a run's manifest.json.
    #[arg(long)]
    from_manifest: Option<PathBuf>,
    /// Batch indices whose similarity matrix is saved for plot-data.
    #[arg(long)]
    dump_wasm: Option<String>,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Directory of a previous score or detect run.
    #[arg(long)]
    run_dir: PathBuf,
    /// Where the CSVs go [default: the run directory].
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Score(args) => {
            let cfg = Settings::load(&args, "score")?.run_config()?;
            let (run, out) = cmd_score(&cfg)?;
            println!("scored {} timesteps in {} batches", run.scores.len(), run.partition.len());
            print_outputs(&out.dir, &out.files);
        }
        Command::Detect(args) => {
            let cfg = Settings::load(&args, "detect")?.run_config()?;
            let (det, out) = cmd_detect(&cfg)?;
            println!(
                "delta {} flags {} of {} timesteps",
                det.decision.delta,
                det.predictions.count_ones(),
                det.predictions.len()
            );
            if let Some(r) = &det.report {
                println!("precision {} recall {} f1 {}", r.precision, r.recall, r.f1);
                if r.empty_truth {
                    println!("labels contain no anomalies; metrics are not defined");
                }
            }
            print_outputs(&out.dir, &out.files);
        }
        Command::Sweep(args) => {
            let settings = Settings::load(&args, "sweep")?;
            let (cfg, grid) = settings.sweep_config()?;
            let (rows, path) = cmd_sweep(&cfg, &grid)?;
            let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
            println!("{} grid points, {failed} failed", rows.len());
            println!("wrote {}", path.display());
        }
        Command::PlotData(args) => {
            let out = args.out.unwrap_or_else(|| args.run_dir.clone());
            let report = cmd_plot_data(&args.run_dir, &out)?;
            print_outputs(&out, &report.files);
        }
        Command::EmbedRef(args) => {
            let settings = Settings::load(&args, "embed-ref")?;
            let (cfg, path) = settings.embed_config()?;
            let out = cmd_embed_ref(&cfg, &path)?;
            print_outputs(&out.dir, &out.files);
        }
    }
    Ok(())
}

fn print_outputs(dir: &std::path::Path, files: &[String]) {
    for f in files {
        println!("wrote {}", dir.join(f).display());
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // help and version requests are not failures
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
