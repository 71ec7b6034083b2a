use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tactile_core::harness::{
    load_model, load_surface, render_csv, render_table, report_exit_code, run_calibrate, run_characterize,
    run_interrogate, run_train, ExperimentConfig, ExperimentReport, HarnessError, Profile, RunOutcome,
};

#[derive(Parser, Debug)]
#[command(name = "tactile", version, about = "Simulated tactile interrogation experiments")]
struct Cli {
    /// Experiment config (JSON). Defaults reproduce the two-inclusion experiment.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    profile: Option<ProfileArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ProfileArg {
    Full,
    Reduced,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the size surface from scripted calibration presses.
    Calibrate,
    /// Train the pressing agent; writes a checkpoint and reward trace.
    Train {
        /// Overrides the configured episode count.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Locate and characterize inclusions on the configured phantom.
    Interrogate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        surface: PathBuf,
    },
    /// Characterize the configured single-inclusion blocks.
    Characterize {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        surface: PathBuf,
    },
    /// Render a report as a table.
    Report {
        report: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Print the effective config as JSON.
    Config,
}

fn effective_config(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Some(p) = cli.profile {
        cfg.sensor.profile = match p {
            ProfileArg::Full => Profile::Full,
            ProfileArg::Reduced => Profile::Reduced,
        };
    }
    if let Command::Train { episodes: Some(e) } = cli.command {
        cfg.agent.episodes = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn finish(out: RunOutcome) -> i32 {
    emit(&render_table(&out.report));
    emit(&format!("run directory: {}\n", out.dir.display()));
    report_exit_code(&out.report)
}

fn run(cli: &Cli) -> Result<i32, HarnessError> {
    if let Command::Report { report, format } = &cli.command {
        let r = ExperimentReport::load(report)?;
        match format {
            Format::Text => emit(&render_table(&r)),
            Format::Csv => emit(&render_csv(&r)),
        }
        return Ok(0);
    }
    let cfg = effective_config(cli)?;
    match &cli.command {
        Command::Calibrate => {
            let out = run_calibrate(&cfg)?;
            emit(&format!("run directory: {}\n", out.dir.display()));
        }
        Command::Train { .. } => {
            let out = run_train(&cfg)?;
            let last = out.trace.last().map_or(0.0, |r| r.cumulative_reward);
            emit(&format!("{} episodes, final episode reward {last:.3}\n", out.trace.len()));
            emit(&format!("run directory: {}\n", out.dir.display()));
        }
        Command::Interrogate { model, surface } => {
            let (m, s) = (load_model(model)?, load_surface(surface)?);
            return Ok(finish(run_interrogate(&cfg, &m, &s)?));
        }
        Command::Characterize { model, surface } => {
            let (m, s) = (load_model(model)?, load_surface(surface)?);
            return Ok(finish(run_characterize(&cfg, &m, &s)?));
        }
        Command::Config => emit(&format!("{}\n", cfg.to_json())),
        Command::Report { .. } => unreachable!("handled above"),
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
