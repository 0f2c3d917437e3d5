use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use chaolink::harness::{
    emit_csv, run_ber_sweep, simulate_frame, train_model_for_config, SimConfig,
};
use chaolink::isi::{compute_isi_coefficients, GENIE_RANGE};

#[derive(Parser)]
#[command(
    name = "chaolink",
    version,
    about = "Chaos-based baseband link simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a BER sweep and write CSV
    Sweep {
        config: PathBuf,
        /// Output file (stdout if omitted)
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Train a CNN on the first frame's probe and save it
    Train {
        config: PathBuf,
        #[arg(short, long, default_value = "model.txt")]
        out: PathBuf,
    },
    /// Dump the ISI coefficient table as CSV
    Coeffs {
        config: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Decode one frame and dump a per-symbol trace as CSV
    Simulate {
        config: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &Path) -> Result<SimConfig> {
    SimConfig::load(path).with_context(|| format!("reading config {}", path.display()))
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => {
            Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sweep { config, out } => {
            let sim = load(&config)?;
            let report = run_ber_sweep(&sim)?;
            let csv = emit_csv(&report.curves)?;
            sink(out.as_deref())?.write_all(csv.as_bytes())?;
            for (ebn0, acc) in sim.noise.ebn0_db.iter().zip(&report.future_accuracy) {
                if let Some(acc) = acc {
                    eprintln!("Eb/N0 {ebn0} dB: cnn future-bit accuracy {acc:.4}");
                }
            }
        }
        Command::Train { config, out } => {
            let sim = load(&config)?;
            let (model, report) = train_model_for_config(&sim)?;
            fs::write(&out, model.to_text())
                .with_context(|| format!("writing {}", out.display()))?;
            eprintln!(
                "trained {} epochs, final loss {:.5}, training accuracy {:.4}",
                report.losses.len(),
                report.losses.last().copied().unwrap_or(f64::NAN),
                report.accuracy
            );
        }
        Command::Coeffs { config, out } => {
            let sim = load(&config)?;
            let table =
                compute_isi_coefficients(&sim.channel()?, &sim.waveform_config(), GENIE_RANGE)?;
            eprintln!("c_main = {}", table.c_main());
            table.write_csv(sink(out.as_deref())?)?;
        }
        Command::Simulate { config, out } => {
            let sim = load(&config)?;
            let trace = simulate_frame(&sim)?;
            if let Some(acc) = trace.train_accuracy {
                eprintln!("cnn training accuracy {acc:.4}");
            }
            trace.write_csv(sink(out.as_deref())?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
