use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dcnsim_core::accel::TraceGenerator;
use dcnsim_core::experiment::{run_grid, write_csv, write_table, ConfigError, ExperimentConfig};
use dcnsim_core::ops::flops_count;
use dcnsim_core::validate::{run_checks, Fault};

#[derive(Parser)]
#[command(name = "dcnsim", version, about = "Deformable convolution accelerator model")]
struct Cli {
    /// Override every offset and cache replacement seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every cell of a config and write a report.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Report file; standard output if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Run the built-in oracle and invariant checks.
    Validate {
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<FaultArg>,
    },
    /// Print the first events of a single-cell config's access trace.
    Trace {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 20)]
        limit: usize,
    },
    /// Print the operation count breakdown of each cell.
    Flops {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Table,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    Rounding,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, format } => run(&config, out.as_deref(), format, cli.seed),
        Command::Validate { inject_fault } => return validate(inject_fault),
        Command::Trace { config, limit } => trace(&config, limit, cli.seed),
        Command::Flops { config } => flops(&config, cli.seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            code: 2,
            message: e.to_string(),
        }
    }
}

fn load(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    if let Some(s) = seed {
        cfg.override_seed(s);
    }
    Ok(cfg)
}

fn run(config: &Path, out: Option<&Path>, format: Format, seed: Option<u64>) -> Result<(), Failure> {
    let cfg = load(config, seed)?;
    let rows = run_grid(&cfg)?;
    let mut sink: Box<dyn Write> = match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Failure {
            code: 2,
            message: format!("cannot create {}: {e}", p.display()),
        })?)),
        None => Box::new(io::stdout().lock()),
    };
    match format {
        Format::Csv => write_csv(&rows, &mut sink)?,
        Format::Table => write_table(&rows, &mut sink)?,
    }
    sink.flush()?;
    Ok(())
}

fn validate(fault: Option<FaultArg>) -> ExitCode {
    let fault = fault.map(|FaultArg::Rounding| Fault::Rounding);
    let results = run_checks(fault);
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("{status}  {:<width$}  {}", r.name, r.detail);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("passed={} failed={failed}", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn trace(config: &Path, limit: usize, seed: Option<u64>) -> Result<(), Failure> {
    let cfg = load(config, seed)?;
    let [cell] = cfg.cells.as_slice() else {
        return Err(Failure {
            code: 3,
            message: format!("trace needs a config with exactly one cell, got {}", cfg.cells.len()),
        });
    };
    let off = cell.offset_field()?;
    let gen = TraceGenerator::new(&cell.spec, off.as_ref(), &cell.engine).map_err(|e| Failure {
        code: 3,
        message: e.to_string(),
    })?;
    let mut out = BufWriter::new(io::stdout().lock());
    gen.dump(&mut out, limit)?;
    out.flush()?;
    Ok(())
}

fn flops(config: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let cfg = load(config, seed)?;
    let mut out = io::stdout().lock();
    for cell in &cfg.cells {
        let f = flops_count(&cell.spec);
        let mode = if cell.spec.depthwise { "depthwise" } else { "full" };
        writeln!(out, "{} ({mode}/{})", cell.label, cell.spec.variant)?;
        for (name, v) in [("mac", f.mac_flops), ("bilinear", f.bilinear_flops), ("total", f.total)] {
            writeln!(
                out,
                "  {name:<8} {v:>12} ops  {:.3e}  {:.4} G",
                v as f64,
                v as f64 / 1e9
            )?;
        }
    }
    Ok(())
}
