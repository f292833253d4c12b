use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use subfourier::harness::{self, CommandOutcome, HarnessError, RunConfig};

#[derive(Parser)]
#[command(name = "subfourier", version, about = "Quasi-periodically doubly-kicked rotor simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; every field has a default.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a field, e.g. `--set drive.ratio=1.001` (repeatable).
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (same as `--set run.output=...`).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, HarnessError> {
        let mut overrides = self.overrides.clone();
        if let Some(out) = &self.out {
            overrides.push(format!("run.output={:?}", out.display().to_string()));
        }
        Ok(RunConfig::load(self.config.as_deref(), &overrides)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Time series of <p^2> and p0 for one drive.
    Evolve(Common),
    /// Resonance scan over the ratio grid with width, cusp and lineshape analysis.
    ScanR(Common),
    /// Eigenphase tracks versus lambda and their avoided crossings.
    LevelDynamics(Common),
    /// Lineshape fit of a scan CSV written by `scan-r`.
    Fit {
        scan_csv: PathBuf,
        /// Report path; defaults to `<scan>.fit.json`.
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(short, long)]
        config: Option<PathBuf>,
    },
    /// Classical diffusion constant of the same drive.
    Classical(Common),
    /// Print the fully expanded default configuration.
    Defaults,
}

fn run(cli: Cli) -> Result<CommandOutcome, HarnessError> {
    let pooled = |common: &Common, f: fn(&RunConfig) -> Result<CommandOutcome, HarnessError>| {
        let config = common.load()?;
        harness::with_workers(&config, || f(&config))?
    };
    match cli.command {
        Command::Evolve(c) => pooled(&c, harness::cmd_evolve),
        Command::ScanR(c) => pooled(&c, harness::cmd_scan_r),
        Command::LevelDynamics(c) => pooled(&c, harness::cmd_level_dynamics),
        Command::Classical(c) => pooled(&c, harness::cmd_classical),
        Command::Fit { scan_csv, out, config } => {
            let config = RunConfig::load(config.as_deref(), &[])?;
            harness::with_workers(&config, || harness::cmd_fit(&config, &scan_csv, out.as_deref()))?
        }
        Command::Defaults => {
            let d = RunConfig::default();
            println!("# system.hbar_eff unset: 8 omega_recoil T from period_us = {}", d.system.resolved_hbar_eff());
            println!("# scan.cusp_half_width unset: the measured FWHM of the scan");
            println!("# classical.p0_band unset: hbar_eff * (scan.p0_window + 1/2)");
            println!("# run.workers = 0: {} or all cores", harness::WORKERS_ENV);
            print!("{}", d.to_toml());
            Ok(CommandOutcome { files: Vec::new(), exit_code: 0, messages: Vec::new() })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(outcome) => {
            for m in &outcome.messages {
                eprintln!("{m}");
            }
            for f in &outcome.files {
                println!("{}", f.display());
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
