use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, CommandFactory, Parser, Subcommand};
use memxbar::experiments::{run_to_csv, write_atomic, ExperimentConfig, ExperimentKind};
use memxbar::Error;

#[derive(Parser)]
#[command(name = "memxbar", version, about = "Multi-device memristor crossbar experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Node level counts (L_C) and effective counts per (m, L).
    Levels(Common),
    /// Relative current error over the (m, L) grid.
    Rce(Common),
    /// RCE grid per R_OFF/R_ON ratio.
    Ratio(Common),
    /// RCE grid per aging ratio.
    Aging(Common),
    /// RCE grid per input-noise variance.
    Noise(Common),
    /// Boundary drift / wire resistance / read instability table.
    Wire(Common),
    /// Network accuracy over the (m, L) grid.
    Nn(Common),
    /// Weight-to-conductance lookup table of one node.
    Mapdump(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML). Optional for `levels` only.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Output CSV path; `-` for standard output.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Trial count (overrides the config).
    #[arg(long, value_name = "N")]
    trials: Option<usize>,
    /// No progress output on stderr.
    #[arg(long)]
    quiet: bool,
}

impl Command {
    fn parts(&self) -> (ExperimentKind, &'static str, &Common) {
        match self {
            Command::Levels(c) => (ExperimentKind::Levels, "levels", c),
            Command::Rce(c) => (ExperimentKind::RceGrid, "rce", c),
            Command::Ratio(c) => (ExperimentKind::RatioSweep, "ratio", c),
            Command::Aging(c) => (ExperimentKind::AgingSweep, "aging", c),
            Command::Noise(c) => (ExperimentKind::NoiseSweep, "noise", c),
            Command::Wire(c) => (ExperimentKind::WireTable, "wire", c),
            Command::Nn(c) => (ExperimentKind::NnGrid, "nn", c),
            Command::Mapdump(c) => (ExperimentKind::Mapdump, "mapdump", c),
        }
    }
}

fn usage(sub: &str) -> String {
    let mut cmd = Cli::command();
    cmd.build();
    cmd.find_subcommand_mut(sub)
        .map(|c| c.render_usage().to_string())
        .unwrap_or_default()
}

fn run(kind: ExperimentKind, sub: &str, opts: &Common) -> Result<(), Error> {
    let mut cfg = match &opts.config {
        Some(path) => ExperimentConfig::load(path)?,
        None if kind == ExperimentKind::Levels => ExperimentConfig::default(),
        None => {
            return Err(Error::Config(format!(
                "--config is required for `{sub}`\n\n{}",
                usage(sub)
            )))
        }
    };
    if let Some(declared) = cfg.experiment {
        if declared != kind {
            return Err(Error::Config(format!(
                "config declares experiment `{}` but `{sub}` was requested",
                declared.name()
            )));
        }
    }
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = opts.trials {
        cfg.trials = trials;
        cfg.nn.trials = None;
    }
    let start = Instant::now();
    let csv = run_to_csv(&cfg, kind)?;
    let out = opts.out.clone().or_else(|| cfg.output.clone());
    match out {
        Some(p) if p.as_os_str() != "-" => {
            write_atomic(&p, &csv)?;
            if !opts.quiet {
                eprintln!("{sub}: wrote {} ({:.1} s)", p.display(), start.elapsed().as_secs_f64());
            }
        }
        _ => {
            std::io::stdout().lock().write_all(csv.as_bytes())?;
            if !opts.quiet {
                eprintln!("{sub}: done ({:.1} s)", start.elapsed().as_secs_f64());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (kind, sub, opts) = cli.command.parts();
    match run(kind, sub, opts) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("memxbar {sub}: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
