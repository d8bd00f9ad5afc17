use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mpe_core::dgp::preset;
use mpe_core::harness::{emit, emit_to, run, write_sample_csv, ExperimentConfig, Format, Mode, Overrides, ResultRecord};
use mpe_core::MpeError;

#[derive(Parser)]
#[command(name = "mpe", version, about = "Marginal policy effects: oracles, estimators and invariant checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Finite-difference oracle and structural side on a simulation design.
    Oracle(Common),
    /// Estimate on a CSV file with columns y, d, optional x1..xk and z.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Input CSV; overrides `data_path` in the config.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Monte Carlo study against the oracle.
    Mc(Common),
    /// The invariant suite; exits 1 if any check fails.
    Check(Common),
    /// Export a simulated sample in the ingestion schema.
    Simulate {
        #[arg(long)]
        dgp: String,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Append the latent disturbances `e` and `eta`.
        #[arg(long)]
        with_latents: bool,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset name with optional parameters, e.g. `gaussian_endogenous:rho=0.3`.
    #[arg(long)]
    dgp: Option<String>,
    /// e.g. `location_shift`, `mean_preserving:alpha=1`.
    #[arg(long)]
    policy: Option<String>,
    /// e.g. `quantile:tau=0.5`, `mean`, `gini`, `id_at:y=0`.
    #[arg(long)]
    functional: Option<String>,
    /// `plugin`, `reweight` or `debiased`, optionally prefixed `cv_`.
    #[arg(long)]
    estimator: Option<String>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `json` or `csv`.
    #[arg(long, default_value = "json")]
    format: String,
}

impl Common {
    fn resolve(&self, mode: Mode, data: Option<PathBuf>) -> Result<(ExperimentConfig, Format), MpeError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_path(path)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply(&Overrides {
            mode: Some(mode),
            dgp: self.dgp.clone(),
            policy: self.policy.clone(),
            functional: self.functional.clone(),
            estimator: self.estimator.clone(),
            tau: self.tau,
            n: self.n,
            replications: self.reps,
            seed: self.seed,
            data_path: data,
        })?;
        Ok((cfg, Format::parse(&self.format)?))
    }

    fn write(&self, record: &ResultRecord, format: Format) -> Result<(), MpeError> {
        match &self.out {
            Some(path) => emit(record, path, format),
            None => emit_to(record, io::stdout().lock(), format),
        }
    }
}

fn execute(common: &Common, mode: Mode, data: Option<PathBuf>) -> Result<ExitCode, MpeError> {
    let (cfg, format) = common.resolve(mode, data)?;
    let record = run(&cfg)?;
    common.write(&record, format)?;
    if mode == Mode::Check {
        let mut err = io::stderr().lock();
        for c in &record.checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            writeln!(err, "{verdict} {}: {} (value {:.6})", c.group, c.name, c.value)?;
        }
        if !record.all_checks_passed() {
            return Ok(ExitCode::from(1));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn simulate(dgp: &str, n: usize, seed: u64, out: &PathBuf, with_latents: bool) -> Result<ExitCode, MpeError> {
    let overrides = Overrides {
        dgp: Some(dgp.to_string()),
        ..Default::default()
    };
    let mut cfg = ExperimentConfig::default();
    cfg.apply(&overrides)?;
    let name = cfg.dgp.name.as_deref().unwrap_or_default();
    let sample = preset(name, &cfg.dgp.params)?.simulate(n, seed)?;
    write_sample_csv(&sample, out, with_latents)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Oracle(c) => execute(c, Mode::Oracle, None),
        Command::Estimate { common, data } => execute(common, Mode::Estimate, data.clone()),
        Command::Mc(c) => execute(c, Mode::Mc, None),
        Command::Check(c) => execute(c, Mode::Check, None),
        Command::Simulate {
            dgp,
            n,
            seed,
            out,
            with_latents,
        } => simulate(dgp, *n, *seed, out, *with_latents),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("mpe: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
