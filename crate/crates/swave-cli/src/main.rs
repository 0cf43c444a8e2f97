//! `swave`: run one experiment from a config file and flags.
//!
//! Exit status: 0 verdict passes, 1 verdict fails, 2 configuration error,
//! 3 precondition violated, 4 numerical failure.

mod config;
mod experiments;
mod output;
mod presets;

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Experiment, ExperimentConfig, FileConfig, Overrides};

#[derive(Parser, Debug)]
#[command(
    name = "swave",
    version,
    about = "Controlled stochastic wave experiments on a binary-tree filtration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment.
    #[command(name = "run")]
    Run {
        experiment: Experiment,
        #[command(flatten)]
        flags: Flags,
    },
    /// Print the named presets.
    ListPresets,
    #[command(flatten)]
    Direct(DirectCommand),
}

/// Every experiment is also a top-level subcommand: `swave hum --K 6`.
#[derive(Subcommand, Debug)]
enum DirectCommand {
    ConditionCheck(Flags),
    Gamma0(Flags),
    IdentityResidual(Flags),
    DualityCheck(Flags),
    Observability(Flags),
    Hum(Flags),
    NegativeClassical(Flags),
    NegativeLocalized(Flags),
    NegativeNoboundary(Flags),
    ReductionCheck(Flags),
}

impl DirectCommand {
    fn split(self) -> (Experiment, Flags) {
        use DirectCommand as D;
        match self {
            D::ConditionCheck(f) => (Experiment::ConditionCheck, f),
            D::Gamma0(f) => (Experiment::Gamma0, f),
            D::IdentityResidual(f) => (Experiment::IdentityResidual, f),
            D::DualityCheck(f) => (Experiment::DualityCheck, f),
            D::Observability(f) => (Experiment::Observability, f),
            D::Hum(f) => (Experiment::Hum, f),
            D::NegativeClassical(f) => (Experiment::NegativeClassical, f),
            D::NegativeLocalized(f) => (Experiment::NegativeLocalized, f),
            D::NegativeNoboundary(f) => (Experiment::NegativeNoboundary, f),
            D::ReductionCheck(f) => (Experiment::ReductionCheck, f),
        }
    }
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Tree levels.
    #[arg(long = "K")]
    k: Option<usize>,
    /// Interior grid points.
    #[arg(long = "M")]
    m: Option<usize>,
    /// Horizon.
    #[arg(long = "T")]
    t: Option<f64>,
    /// Domain length.
    #[arg(long = "L")]
    l: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    mu0: Option<f64>,
    #[arg(long)]
    c0: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// auto, none, left, right or both.
    #[arg(long)]
    gamma0: Option<String>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_hyphen_values = true)]
    fault: Option<f64>,
    /// f or g (negative-localized).
    #[arg(long)]
    localized: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            preset: self.preset.clone(),
            k: self.k,
            m: self.m,
            t: self.t,
            l: self.l,
            x0: self.x0,
            alpha: self.alpha,
            mu0: self.mu0,
            c0: self.c0,
            c1: self.c1,
            lambda: self.lambda,
            gamma0: self.gamma0.clone(),
            samples: self.samples,
            seed: self.seed,
            out: self.out.clone(),
            fault: self.fault,
            localized: self.localized.clone(),
        }
    }
}

fn status_of(err: &swave::Error) -> u8 {
    use swave::Error as E;
    match err {
        E::InvalidParameter(_) => 2,
        E::Precondition(_) | E::Cfl { .. } => 3,
        E::Numerical(_) | E::Shape(_) | E::LevelOutOfRange { .. } => 4,
    }
}

fn run(experiment: Experiment, flags: Flags) -> u8 {
    let file = match &flags.config {
        Some(path) => match config::read_file(path) {
            Ok(f) => f,
            Err(e) => {
                eprintln!("error: {e:#}");
                return 2;
            }
        },
        None => FileConfig::default(),
    };
    let cfg = match ExperimentConfig::resolve(experiment, &file, &flags.overrides()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return 2;
        }
    };
    let outcome = match experiments::run(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return status_of(&e);
        }
    };
    if let Err(e) = output::write_all(&cfg.out, &outcome) {
        eprintln!("error: {e:#}");
        return 4;
    }
    // A closed pipe (e.g. `| head`) is not a failure of the run.
    let _ = write!(
        std::io::stdout(),
        "{}\noutputs written to {}\n",
        output::report(&outcome),
        cfg.out.display()
    );
    if outcome.result.verdict {
        0
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let code = match cli.command {
        Command::ListPresets => {
            let _ = write!(std::io::stdout(), "{}", presets::table());
            0
        }
        Command::Run { experiment, flags } => run(experiment, flags),
        Command::Direct(d) => {
            let (e, f) = d.split();
            run(e, f)
        }
    };
    ExitCode::from(code)
}
