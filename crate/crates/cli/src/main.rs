//! `effstab`: runs the normal-form and stability pipeline from a JSON config.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 usage or configuration error.

mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use effstab::config::{ExperimentConfig, HamiltonianSource};
use effstab::diophantine::dc_constant;
use effstab::pipeline::{Pipeline, Stage, StageError};
use effstab::Error;

#[derive(Parser)]
#[command(name = "effstab", version, about = "Normal forms, Diophantine sets and effective stability near invariant tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Birkhoff normal form to optimal order at each radius.
    Bnf(RunArgs),
    /// Frequency geometry: the spans V_m, their dimension and stabilization order.
    Geometry(RunArgs),
    /// Monte Carlo measure of the Diophantine action set.
    Dioset(RunArgs),
    /// Second normalization at a Diophantine action.
    Poschel(RunArgs),
    /// Integrate one orbit and store the trajectory.
    Integrate(RunArgs),
    /// All stages through the stability scan.
    Pipeline(RunArgs),
    /// Summarize the artifacts of a run directory.
    Report {
        /// Run directory holding manifest.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-cutoff Diophantine constant of the configured frequency.
    Dc(RunArgs),
}

/// Config source and the fields that can be overridden from the command line.
#[derive(Args)]
struct RunArgs {
    /// JSON config document.
    #[arg(long, conflicts_with = "bundled", required_unless_present = "bundled")]
    config: Option<PathBuf>,
    /// Use a bundled Hamiltonian with default settings instead of a config.
    #[arg(long)]
    bundled: Option<String>,
    /// Normalization order cap (`m_cap`).
    #[arg(long)]
    order: Option<u32>,
    /// Single radius replacing the sweep.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Mode cutoff `K`.
    #[arg(long)]
    mode_cutoff: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match (&self.config, &self.bundled) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => ExperimentConfig::with_source(HamiltonianSource::Bundled(name.clone())),
            (None, None) => unreachable!("clap requires one source"),
        };
        if let Some(m) = self.order {
            cfg.m_cap = m;
        }
        if let Some(r) = self.radius {
            cfg.radii = vec![r];
        }
        if self.tau.is_some() {
            cfg.tau = self.tau;
        }
        if self.gamma.is_some() {
            cfg.gamma = self.gamma;
        }
        if self.mode_cutoff.is_some() {
            cfg.mode_cutoff = self.mode_cutoff;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        Ok(cfg)
    }
}

fn exit_code(e: &Error) -> ExitCode {
    if e.is_numerical() {
        ExitCode::from(1)
    } else {
        ExitCode::from(2)
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    exit_code(e)
}

fn fail_stage(e: &StageError) -> ExitCode {
    eprintln!("error: {e}");
    exit_code(&e.source)
}

fn print_json<T: serde::Serialize>(value: &T) {
    let text = serde_json::to_string_pretty(value).expect("outputs always serialize");
    // a closed pipe (e.g. `| head`) is not an error of the run
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn run_stage(args: &RunArgs, stage: Stage) -> ExitCode {
    let pipeline = match args.config().and_then(|c| Pipeline::new(&c)) {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    let out = pipeline.config.out.clone();
    match pipeline.execute(stage, &out) {
        Ok(manifest) => {
            print_json(&manifest.artifacts);
            ExitCode::SUCCESS
        }
        Err(e) => fail_stage(&e),
    }
}

fn run_integrate(args: &RunArgs) -> ExitCode {
    let result = args.config().and_then(|c| Pipeline::new(&c)).and_then(|p| {
        let out = p.config.out.clone();
        p.integrate(&out)
    });
    match result {
        Ok((meta, _)) => {
            print_json(&meta);
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn run_dc(args: &RunArgs) -> ExitCode {
    match args.config().and_then(|c| c.resolve()).and_then(|(c, _)| c.diophantine()) {
        Ok(spec) => {
            print_json(&dc_constant(&spec.omega, spec.tau, spec.k_max));
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Bnf(a) => run_stage(a, Stage::Bnf),
        Command::Geometry(a) => run_stage(a, Stage::Geometry),
        Command::Dioset(a) => run_stage(a, Stage::Dioset),
        Command::Poschel(a) => run_stage(a, Stage::Poschel),
        Command::Pipeline(a) => run_stage(a, Stage::Stability),
        Command::Integrate(a) => run_integrate(a),
        Command::Dc(a) => run_dc(a),
        Command::Report { out } => match report::write(out) {
            Ok(rep) => {
                print_json(&rep);
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
    }
}
