use std::path::{Path, PathBuf};
use std::process::ExitCode;

use antbp::harness::output::plot_run_bins;
use antbp::harness::sweep::{plot_sweep, write_sweep};
use antbp::harness::{check_run_dir, load_config, run_scenario, run_sweep, write_run, SweepSpec};
use antbp::policies::PolicyKind;
use antbp::{Error, Result};
use clap::{Parser, Subcommand};

/// Overrides `run.output_dir` from the config when set.
const OUTPUT_ENV: &str = "ANTBP_OUTPUT";

#[derive(Parser)]
#[command(name = "antbp", version, about = "Slotted wireless backpressure and ant-routing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its traces, metrics and manifest.
    Run {
        config: PathBuf,
        /// Instance index (overrides run.seed).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sweep one config key over a list of values and seeds.
    Sweep {
        config: PathBuf,
        /// Dotted config key, e.g. traffic.bursty_load.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// Comma-separated policies compared on every cell.
        #[arg(long, value_delimiter = ',')]
        policies: Option<Vec<String>>,
    },
    /// Re-run a recorded run with invariant checks and compare its traces.
    Check { run_dir: PathBuf },
    /// Draw SVG plots from a sweep CSV.
    Plot {
        sweep_csv: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn output_root(configured: &Path) -> PathBuf {
    std::env::var_os(OUTPUT_ENV).map(PathBuf::from).unwrap_or_else(|| configured.to_path_buf())
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "scenario".into())
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Run { config, seed } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.run.seed = s;
            }
            let dir = output_root(&cfg.run.output_dir).join(format!("{}-s{}", stem(&config), cfg.run.seed));
            let out = run_scenario(&cfg)?;
            write_run(&out, &dir)?;
            plot_run_bins(&out, &dir)?;
            let m = &out.metrics;
            let opt = |x: Option<f64>| x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
            println!(
                "{}: injected {} delivered {} ratio {} latency {} goodput {:.4}",
                cfg.policy.kind.as_str(),
                m.injected,
                m.delivered,
                opt(m.delivery_ratio),
                opt(m.latency),
                m.goodput
            );
            println!("wrote {}", dir.display());
            Ok(true)
        }
        Command::Sweep { config, axis, values, seeds, policies } => {
            let cfg = load_config(&config)?;
            let policies = policies
                .map(|ps| {
                    ps.iter()
                        .map(|p| PolicyKind::parse(p).ok_or_else(|| Error::invalid(format!("unknown policy '{p}'"))))
                        .collect::<Result<Vec<_>>>()
                })
                .transpose()?;
            let spec = SweepSpec { axis: axis.clone(), values, seeds, policies };
            let cells = run_sweep(&cfg, &spec)?;
            let dir = output_root(&cfg.run.output_dir).join(format!("{}-sweep-{}", stem(&config), axis.replace('.', "_")));
            let (cells_path, summary_path) = write_sweep(&dir, &axis, &cells)?;
            let failed: Vec<_> = cells.iter().filter_map(|c| c.result.as_ref().err().map(|e| (c, e))).collect();
            for (c, e) in &failed {
                eprintln!("cell {} {}={} seed {} failed: {e}", c.group, axis, c.value, c.seed);
            }
            println!("{} cells ({} failed)", cells.len(), failed.len());
            println!("wrote {} and {}", cells_path.display(), summary_path.display());
            Ok(true)
        }
        Command::Check { run_dir } => {
            let report = check_run_dir(&run_dir)?;
            for name in &report.matched {
                println!("ok       {name}");
            }
            for name in &report.mismatched {
                println!("MISMATCH {name}");
            }
            Ok(report.ok())
        }
        Command::Plot { sweep_csv, out } => {
            let dir = out.unwrap_or_else(|| sweep_csv.parent().map(Path::to_path_buf).unwrap_or_default().join("plots"));
            for p in plot_sweep(&sweep_csv, &dir)? {
                println!("wrote {}", p.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Bad arguments count as configuration errors.
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 1 } else { 2 })
        }
    }
}
