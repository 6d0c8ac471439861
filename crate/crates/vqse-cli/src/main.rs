//! Command-line driver: run potential-energy-curve scans, re-solve persisted
//! pencils, validate configurations, and emit rank-scan traces.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vqse::scan::{
    emit_outputs, run_scan, solve_pencil_file, trace_geometry, validate, write_scan_result,
    ScanConfig,
};
use vqse::spectra::JumpOptions;

#[derive(Parser)]
#[command(name = "vqse", version, about = "Potential energy curves via the virtual subspace expansion pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScanArgs {
    /// Scan configuration file (flat key = value format).
    #[arg(long)]
    config: PathBuf,
    /// Override the base RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Force exact expectations (shots = 0, no depolarizing).
    #[arg(long)]
    noiseless: bool,
    /// Also emit gnuplot-compatible data blocks.
    #[arg(long)]
    gnuplot: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full scan from a config file.
    Scan(ScanArgs),
    /// Re-run the regularized spectra from a persisted pencil JSON.
    Solve {
        /// Pencil JSON produced by a scan with save_pencils = true.
        #[arg(long)]
        pencil: PathBuf,
        /// Fixed retained rank (default: ground-state rank selection).
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 10.0)]
        jump_factor: f64,
        #[arg(long, default_value_t = 0.020)]
        jump_floor: f64,
    },
    /// Check fixtures, checksums, and partition consistency.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Emit the E0(k) rank-scan data for one geometry.
    Trace {
        #[arg(long)]
        config: PathBuf,
        /// Geometry label (the R value as written in the config).
        #[arg(long)]
        geometry: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn exit_code_for(err: &vqse::Error) -> u8 {
    match err {
        vqse::Error::Config(_) | vqse::Error::Parse { .. } => 1,
        _ => 2,
    }
}

fn load_config(
    path: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    noiseless: bool,
) -> vqse::Result<ScanConfig> {
    let mut config = ScanConfig::from_file(path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(o) = out {
        config.out_dir = o;
    }
    if noiseless {
        config.shots = 0;
        config.depolarizing = 0.0;
    }
    Ok(config)
}

fn set_jobs(jobs: Option<usize>) {
    if let Some(n) = jobs {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

fn run() -> vqse::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Scan(args) => {
            set_jobs(args.jobs);
            let config = load_config(&args.config, args.seed, args.out, args.noiseless)?;
            let result = run_scan(&config)?;
            let mut failed = 0usize;
            for g in &result.geometries {
                match &g.error {
                    Some(e) => {
                        failed += 1;
                        eprintln!("R={}: FAILED at {e}", g.r_label);
                    }
                    None => {
                        let mut parts: Vec<String> = g
                            .energies
                            .iter()
                            .map(|(m, es)| format!("{m}={:.6}", es[0]))
                            .collect();
                        parts.sort();
                        println!("R={}: {}", g.r_label, parts.join(" "));
                    }
                }
            }
            write_scan_result(&result, &config.out_dir)?;
            let files = emit_outputs(&result, &config.out_dir, args.gnuplot)?;
            for f in files {
                println!("wrote {}", f.display());
            }
            if failed == result.geometries.len() {
                return Err(vqse::Error::Data(
                    "every geometry failed; see diagnostics".into(),
                ));
            }
            Ok(())
        }
        Command::Solve {
            pencil,
            k,
            jump_factor,
            jump_floor,
        } => {
            let jump = JumpOptions {
                median_factor: jump_factor,
                abs_floor: jump_floor,
            };
            let spec = solve_pencil_file(&pencil, k, &jump)?;
            println!("{}", serde_json::to_string_pretty(&spec).expect("serializable"));
            Ok(())
        }
        Command::Validate { config } => {
            let config = ScanConfig::from_file(&config)?;
            let checksums = validate(&config)?;
            for (file, hash) in checksums {
                println!("{file} {hash}");
            }
            println!("config ok: {} geometries", config.geometries.len());
            Ok(())
        }
        Command::Trace {
            config,
            geometry,
            out,
            jobs,
        } => {
            set_jobs(jobs);
            let config = load_config(&config, None, out, false)?;
            let path = trace_geometry(&config, &geometry)?;
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
            ExitCode::from(exit_code_for(&e))
        }
    }
}
