use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use gogrow_harness::commands::Harness;
use gogrow_harness::spec::{ExperimentSpec, Kind, Overrides};

#[derive(Parser)]
#[command(name = "gogrow", version, about = "Go-or-grow particle system: simulations, limit equations and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the particle system and dump snapshots and the K-th position.
    Simulate(Common),
    /// Front speed over a grid of K and chi.
    SpeedSweep(Common),
    /// Pooled histogram of positions relative to the K-th particle.
    Histogram(Common),
    /// Ancestral lineages of the particles in a window.
    Lineage(Common),
    /// Free-boundary limit equation and its front position.
    PdeFront(Common),
    /// Evolution of the ancestral density.
    FpEvolve(Common),
    /// Run acceptance checks and write verify.json.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct Common {
    /// TOML experiment spec.
    #[arg(long, alias = "spec")]
    config: Option<PathBuf>,
    #[arg(long)]
    chi: Option<f64>,
    #[arg(long = "k", short = 'K')]
    k: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to one per core.
    #[arg(long, env = "GOGROW_JOBS")]
    jobs: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated criterion names; default is all.
    #[arg(long, value_delimiter = ',')]
    only: Vec<String>,
}

impl Common {
    fn spec(&self) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(p) => ExperimentSpec::load(p)?,
            None => ExperimentSpec::default(),
        };
        spec.apply(&Overrides {
            chi: self.chi,
            k: self.k,
            dt: self.dt,
            t_end: self.t_end,
            seed: self.seed,
            replicates: self.replicates,
            out: self.out.clone(),
        });
        Ok(spec)
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<bool> {
    let cli = Cli::parse();
    let (kind, common, only) = match cli.command {
        Command::Simulate(c) => (Kind::Simulate, c, Vec::new()),
        Command::SpeedSweep(c) => (Kind::SpeedSweep, c, Vec::new()),
        Command::Histogram(c) => (Kind::Histogram, c, Vec::new()),
        Command::Lineage(c) => (Kind::Lineage, c, Vec::new()),
        Command::PdeFront(c) => (Kind::PdeFront, c, Vec::new()),
        Command::FpEvolve(c) => (Kind::FpEvolve, c, Vec::new()),
        Command::Verify(v) => (Kind::Verify, v.common, v.only),
    };
    let mut spec = common.spec()?;
    if !only.is_empty() {
        spec.verify.criteria = only;
    }
    let outcome = Harness::new(common.jobs)?.execute(kind, &spec)?;
    for line in &outcome.lines {
        println!("{line}");
    }
    for e in &outcome.manifest.errors {
        eprintln!("run {} failed: {}", e.run_id, e.error);
    }
    Ok(outcome.ok)
}
