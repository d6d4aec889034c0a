//! Command-line front end: one experiment document, seven subcommands.
//!
//! Exit codes: 0 success, 2 configuration/contract error, 3 numeric or
//! statistical failure, 4 IO failure.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lifshitz_lab::config::{ExperimentConfig, SideSpec};
use lifshitz_lab::disorder::EnvelopeProfile;
use lifshitz_lab::error::{Error, Result};
use lifshitz_lab::runner::{run_task, FunctionalFilter, RunContext, RunRecord, Task};

#[derive(Parser)]
#[command(
    name = "lifshitz-lab",
    version,
    about = "Monte Carlo laboratory for the low-energy spectral statistics \
             of lattice Schrödinger operators with squared alloy potentials"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment document (JSON). Required except for `exponent-table`,
    /// which can run from its built-in defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (overrides the document's `out_dir`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Base RNG seed (overrides the document's `base_seed`).
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads (default: machine parallelism).
    #[arg(long)]
    threads: Option<usize>,

    /// Emit SVG plots (the default).
    #[arg(long)]
    plot: bool,

    /// Suppress SVG plots.
    #[arg(long, conflicts_with = "plot")]
    no_plot: bool,

    /// Override the document's dimension.
    #[arg(long, alias = "d")]
    dim: Option<usize>,

    /// Override the box side(s); repeat or comma-separate for a list.
    #[arg(long, alias = "L", num_args = 1.., value_delimiter = ',')]
    side_length: Option<Vec<f64>>,

    /// Override the grid resolution of the first box.
    #[arg(long, alias = "n")]
    points_per_side: Option<usize>,

    /// Override the number of disorder samples.
    #[arg(long)]
    samples: Option<usize>,

    /// Override the envelope decay exponent (switches a compact envelope
    /// to polynomial decay at unit amplitude).
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
enum FunctionalArg {
    #[default]
    Both,
    Energy,
    Minorant,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the spectral counting function, bracketed from both sides
    Ids(Common),
    /// Estimate the counting curve and fit its low-energy tail exponent
    ExponentFit(Common),
    /// The theoretical exponent table (or one entry via --d/--alpha)
    ExponentTable(Common),
    /// Check empirical deviation tails against the bounded-difference bound
    Concentration {
        #[command(flatten)]
        common: Common,
        /// Which deviation functional(s) to run.
        #[arg(long, value_enum, default_value_t)]
        functional: FunctionalArg,
    },
    /// Track the ground energy along t·V with its tangent and remainder
    Perturbation(Common),
    /// Sample the conditioned quiet event and its variational energy ceiling
    LowerBound(Common),
    /// Grow the box at fixed grid density and watch the bracket tighten
    Convergence(Common),
}

fn split(command: Command) -> (Common, Task) {
    match command {
        Command::Ids(c) => (c, Task::Ids),
        Command::ExponentFit(c) => (c, Task::ExponentFit),
        // the query is resolved after overrides are applied
        Command::ExponentTable(c) => (c, Task::ExponentTable { query: None }),
        Command::Concentration { common, functional } => {
            let functional = match functional {
                FunctionalArg::Both => FunctionalFilter::Both,
                FunctionalArg::Energy => FunctionalFilter::Energy,
                FunctionalArg::Minorant => FunctionalFilter::Minorant,
            };
            (common, Task::Concentration { functional })
        }
        Command::Perturbation(c) => (c, Task::Perturbation),
        Command::LowerBound(c) => (c, Task::LowerBound),
        Command::Convergence(c) => (c, Task::Convergence),
    }
}

fn apply_overrides(config: &mut ExperimentConfig, common: &Common) {
    if let Some(dim) = common.dim {
        config.dim = dim;
    }
    if let Some(sides) = &common.side_length {
        config.side_length = if sides.len() == 1 {
            SideSpec::Single(sides[0])
        } else {
            SideSpec::List(sides.clone())
        };
    }
    if let Some(n) = common.points_per_side {
        config.points_per_side = n;
    }
    if let Some(samples) = common.samples {
        config.samples = samples;
    }
    if let Some(alpha) = common.alpha {
        config.envelope = match config.envelope {
            EnvelopeProfile::PolyDecay { amplitude, .. } => {
                EnvelopeProfile::PolyDecay { alpha, amplitude }
            }
            EnvelopeProfile::CompactBump { .. } => {
                EnvelopeProfile::PolyDecay { alpha, amplitude: 1.0 }
            }
        };
    }
}

fn run(cli: Cli) -> Result<RunRecord> {
    let (common, mut task) = split(cli.command);
    if let Some(threads) = common.threads {
        if threads == 0 {
            return Err(Error::config("--threads", "thread count must be positive"));
        }
        // a second configuration attempt in one process is harmless: the
        // first pool wins and the run stays deterministic either way
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None if matches!(task, Task::ExponentTable { .. }) => ExperimentConfig::example(),
        None => {
            return Err(Error::config(
                "--config",
                "this subcommand needs an experiment document; see `exponent-table` for \
                 the one that runs without",
            ))
        }
    };
    apply_overrides(&mut config, &common);
    if let Task::ExponentTable { query } = &mut task {
        // an explicit --alpha (with --d or the document's dimension) asks
        // for a single table entry
        if let Some(alpha) = common.alpha {
            *query = Some((config.dim, alpha));
        }
    }
    let ctx = RunContext::new(config, common.out.clone(), common.seed, !common.no_plot);
    run_task(&task, &ctx)
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(record) => {
            for line in &record.summary {
                println!("{line}");
            }
            for artifact in &record.artifacts {
                println!("wrote {} ({} rows, sha256 {})", artifact.file, artifact.rows, artifact.sha256);
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
