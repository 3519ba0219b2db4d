//! `czlab`: batch front end for the weak-type estimate laboratory.
//!
//! Exit codes: 0 success, 1 bad configuration, 2 evaluator error, 3 a
//! ledger entry failed, 4 tuple budget exceeded.

mod commands;
mod settings;
mod specs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::settings::Settings;

#[derive(Parser)]
#[command(name = "czlab", version, propagate_version = true, about = "Numerical checks of weak-type endpoint estimates for multilinear singular integrals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the size and smoothness constants of a kernel.
    KernelCheck(Flags),
    /// Whitney decomposition of a union of open boxes (`--set`).
    Whitney(Flags),
    /// Uncentered maximal function of the first `--slot`.
    Maximal(Flags),
    /// Evaluate the operator on the `--slot` inputs at `--targets`.
    Apply(Flags),
    /// Disjointified ball system of the atomic `--slot` inputs at level `--t`.
    BallSystem(Flags),
    /// Build an inequality ledger for `--scenario` theorem1, theorem2 or lemma1.
    Verify(Flags),
}

/// Flags shared by every subcommand. Each overrides the same key in `--config`.
#[derive(Args, Clone, Debug)]
struct Flags {
    /// Flat JSON file whose keys are flag names.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// homogeneous, tensor-hilbert, riesz, zero, or hilbert (1/(x-y)).
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    m: Option<String>,
    /// Constant of the homogeneous kernel.
    #[arg(long)]
    c: Option<String>,
    /// Component index of the Riesz kernel.
    #[arg(long)]
    j: Option<String>,
    /// Cell width, `2^-8` or a decimal power of two.
    #[arg(long)]
    h: Option<String>,
    /// Extent `lo,hi`, used on every axis.
    #[arg(long = "box", value_name = "LO,HI", allow_hyphen_values = true)]
    extent: Option<String>,
    /// Exclusion radius in cell widths.
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    t: Option<String>,
    #[arg(long)]
    t_min: Option<String>,
    #[arg(long)]
    t_max: Option<String>,
    #[arg(long)]
    t_count: Option<String>,
    /// Truncation levels, comma separated.
    #[arg(long = "N", value_name = "LIST")]
    n_list: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Maximum number of kernel evaluations.
    #[arg(long)]
    budget: Option<String>,
    /// Kernel-check sample count.
    #[arg(long)]
    samples: Option<String>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "NAME")]
    scenario: Option<String>,
    /// Input: indicator:LO:HI[:VALUE], zero, file:PATH, atoms:P@W;P@W. Repeat per slot.
    #[arg(long, value_name = "SPEC", allow_hyphen_values = true)]
    slot: Vec<String>,
    /// Open box LO:HI. Repeat for unions (whitney) or several sets (lemma1).
    #[arg(long, value_name = "LO:HI", allow_hyphen_values = true)]
    set: Vec<String>,
    /// `grid` or a list of points `P;P;...`.
    #[arg(long, allow_hyphen_values = true)]
    targets: Option<String>,
    /// Run theorem1 even when the kernel has no known L^2 bound.
    #[arg(long)]
    allow_unbounded: bool,
}

impl Flags {
    fn settings(self) -> anyhow::Result<Settings> {
        let mut s = match &self.config {
            Some(path) => Settings::from_file(path)?,
            None => Settings::default(),
        };
        for (key, value) in [
            ("kernel", self.kernel),
            ("n", self.n),
            ("m", self.m),
            ("c", self.c),
            ("j", self.j),
            ("h", self.h),
            ("box", self.extent),
            ("eps", self.eps),
            ("t", self.t),
            ("t-min", self.t_min),
            ("t-max", self.t_max),
            ("t-count", self.t_count),
            ("N", self.n_list),
            ("seed", self.seed),
            ("budget", self.budget),
            ("samples", self.samples),
            ("out", self.out.map(|p| p.display().to_string())),
            ("scenario", self.scenario),
            ("targets", self.targets),
        ] {
            s.overlay(&key, value);
        }
        s.overlay_list("slot", self.slot);
        s.overlay_list("set", self.set);
        if self.allow_unbounded {
            s.overlay("allow-unbounded", Some("true".into()));
        }
        Ok(s)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (name, flags) = match cli.command {
        Command::KernelCheck(f) => ("kernel-check", f),
        Command::Whitney(f) => ("whitney", f),
        Command::Maximal(f) => ("maximal", f),
        Command::Apply(f) => ("apply", f),
        Command::BallSystem(f) => ("ball-system", f),
        Command::Verify(f) => ("verify", f),
    };
    let result = flags.settings().map_err(commands::Failure::Config).and_then(|s| commands::run(name, &s));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("czlab {name}: {failure}");
            ExitCode::from(failure.code())
        }
    }
}
