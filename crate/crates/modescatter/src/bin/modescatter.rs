use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use modescatter::experiment::{run_experiment, validate_config};

#[derive(Parser)]
#[command(name = "modescatter", about = "Grating/waveguide scattering experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a config file and report the resolved parameters.
    Validate { config: PathBuf },
    /// Run the configured experiment pipeline.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (fallback: MODESCATTER_THREADS, then all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Grid refinement factor applied to the scenario (>= 1).
        #[arg(long)]
        resolution_scale: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config } => match validate_config(&config, None, None) {
            Ok(rc) => {
                println!(
                    "ok: kind = {:?}, {} k-points in [{:.6}, {:.6}], m_max = {}, incident span = {}, out = {}",
                    rc.kind,
                    rc.ks.len(),
                    rc.ks.iter().cloned().fold(f64::MAX, f64::min),
                    rc.ks.iter().cloned().fold(f64::MIN, f64::max),
                    rc.m_max,
                    rc.incident_span,
                    rc.output_dir.display()
                );
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
        Command::Run { config, out, threads, resolution_scale } => {
            let threads = threads.or_else(|| {
                std::env::var("MODESCATTER_THREADS").ok().and_then(|v| v.parse().ok())
            });
            if let Some(n) = threads {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error: cannot size thread pool: {e}");
                    return ExitCode::from(2);
                }
            }
            let rc = match validate_config(&config, out.as_deref(), resolution_scale) {
                Ok(rc) => rc,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(e.exit_code() as u8);
                }
            };
            match run_experiment(&rc) {
                Ok(manifest) => {
                    println!(
                        "wrote {} files to {}",
                        manifest.files.len() + 1,
                        rc.output_dir.display()
                    );
                    if manifest.audit_pass {
                        println!("audit: pass");
                        ExitCode::SUCCESS
                    } else {
                        eprintln!("audit: FAIL (see metrics.json)");
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}
