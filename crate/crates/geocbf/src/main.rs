use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use geocbf::scenario::{
    exit_code, run_and_export, run_sweep, sweep_summary_csv, write_atomic, FilterKind, ScenarioConfig,
};
use geocbf::Error;

#[derive(Parser)]
#[command(name = "geocbf", about = "Geometric safety-filter simulations", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a single scenario and write report.json (plus optional
    /// trajectory CSV and SVG plots).
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the filter from the config (qp, hs, none).
        #[arg(long)]
        filter: Option<String>,
        /// Also write trajectory.csv.
        #[arg(long)]
        csv: bool,
        /// Also write h_plot.svg and sphere_trace.svg.
        #[arg(long)]
        svg: bool,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run the library's internal invariant checks and print a pass/fail
    /// table.
    Check {
        /// Restrict to checks whose name contains this string.
        #[arg(long)]
        module: Option<String>,
        /// Smaller sample counts for a fast smoke pass.
        #[arg(long)]
        quick: bool,
    },
    /// Re-run a scenario over a list of parameter values and write a summary
    /// CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// One of: epsilon, delta, alpha-gain, theta-safe.
        #[arg(long)]
        param: String,
        /// Comma-separated list of values.
        #[arg(long)]
        values: String,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

const EXIT_CHECK_FAILED: u8 = 1;

fn resolve_output_dir(flag: Option<PathBuf>, cfg: &ScenarioConfig) -> PathBuf {
    flag.or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os("GEOCBF_OUTPUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("geocbf-out"))
}

fn run() -> Result<(), Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, filter, csv, svg, output_dir } => {
            let mut cfg = ScenarioConfig::load(&config)?;
            if let Some(f) = filter {
                cfg.filter = FilterKind::parse(&f)?;
            }
            let dir = resolve_output_dir(output_dir, &cfg);
            let report = run_and_export(&cfg, &dir, csv, svg)?;
            println!(
                "min_h={:.6e} min_h0={:.6e} active={:.3} max_tau={:.6e} ({})",
                report.min_h,
                report.min_h0,
                report.constraint_active_fraction,
                report.max_torque_norm,
                dir.display()
            );
            if report.divergence_flag {
                return Err(Error::Divergence { t: f64::NAN });
            }
            Ok(())
        }
        Command::Check { module, quick } => {
            let outcomes = geocbf::checks::run_all(quick);
            let mut failed = 0usize;
            let mut shown = 0usize;
            for o in &outcomes {
                if let Some(m) = &module {
                    if !o.name.contains(m.as_str()) {
                        continue;
                    }
                }
                shown += 1;
                let status = if o.passed { "PASS" } else { "FAIL" };
                println!("{status}  {:<32}  {}", o.name, o.detail);
                if !o.passed {
                    failed += 1;
                }
            }
            if shown == 0 {
                return Err(Error::Config(format!(
                    "no checks match module filter {module:?}"
                )));
            }
            if failed > 0 {
                eprintln!("{failed}/{shown} checks failed");
                std::process::exit(EXIT_CHECK_FAILED.into());
            }
            println!("all {shown} checks passed");
            Ok(())
        }
        Command::Sweep { config, param, values, output_dir } => {
            let cfg = ScenarioConfig::load(&config)?;
            let values: Vec<f64> = values
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad sweep value '{v}'")))
                })
                .collect::<Result<_, _>>()?;
            if values.is_empty() {
                return Err(Error::Config("no sweep values given".into()));
            }
            let rows = run_sweep(&cfg, &param, &values)?;
            let dir = resolve_output_dir(output_dir, &cfg);
            std::fs::create_dir_all(&dir)?;
            let path = dir.join(format!("sweep_{}.csv", param.replace('-', "_")));
            write_atomic(&path, &sweep_summary_csv(&rows))?;
            for (v, r) in &rows {
                println!("{param}={v:<10} min_h0={:.6e} max_tau={:.6e}", r.min_h0, r.max_torque_norm);
            }
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
