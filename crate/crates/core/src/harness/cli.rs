//! Command-line interface.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::config::ExperimentConfig;
use super::plot::plot_csv;
use super::run::{run_experiment, write_csv};
use super::selftest::selftest;
use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "osilp", version, about = "Online semi-infinite LP experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one configuration point.
    Run(RunArgs),
    /// Run every point of the [sweep] section.
    Sweep(RunArgs),
    /// Render SVG figures from a results CSV.
    Plot {
        csv: PathBuf,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Quick consistency checks.
    Selftest,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replications, overriding the configuration.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Full scale: m = 2000, T = 5000, 100 replications.
    #[arg(long)]
    pub paper_scale: bool,
    /// Results CSV path (stdout when omitted). The effective configuration
    /// is written next to it as `<out>.effective.toml`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for per-run trajectory dumps.
    #[arg(long)]
    pub dump: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    pub print_config: bool,
}

/// Process exit status for an error: 2 for bad input, 3 for numerical
/// trouble, 1 for I/O.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Parse { .. } | Error::Precondition(_) => 2,
        Error::Numerical { .. } | Error::Model(_) | Error::Domain(_) | Error::Dimension { .. } => 3,
        Error::Io(_) => 1,
    }
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if args.paper_scale {
        cfg.apply_full_scale();
    }
    if let Some(s) = args.seed {
        cfg.master_seed = s;
    }
    if let Some(r) = args.reps {
        cfg.reps = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn effective_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".effective.toml");
    out.with_file_name(name)
}

fn execute(args: &RunArgs, sweep: bool) -> Result<()> {
    let mut cfg = load_config(args)?;
    if sweep {
        if cfg.sweep.is_none() {
            return Err(Error::Config("sweep needs a [sweep] section".into()));
        }
    } else {
        cfg.sweep = None;
    }
    let effective = cfg.to_toml();
    if args.print_config {
        print!("{effective}");
        return Ok(());
    }
    let output = run_experiment(&cfg, args.dump.as_deref())?;
    match &args.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            write_csv(&output, &mut w)?;
            w.flush()?;
            std::fs::write(effective_path(path), effective)?;
        }
        None => {
            eprint!("# effective config\n{effective}");
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            write_csv(&output, &mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

/// Parse arguments, run, and return the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Run(a) => execute(a, false),
        Command::Sweep(a) => execute(a, true),
        Command::Plot { csv, out } => plot_csv(csv, out).map(|paths| {
            for p in paths {
                println!("{}", p.display());
            }
        }),
        Command::Selftest => match selftest(io::stdout()) {
            Ok(true) => Ok(()),
            Ok(false) => return 3,
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
