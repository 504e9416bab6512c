use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod config;
mod plot;
mod run;

use config::{ConfigError, RunConfig};
use run::{Command, RunContext, Suite};

/// Discrete sub-Laplacian experiments driven by a TOML config.
#[derive(Parser, Debug)]
#[command(name = "hormander", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// Run configuration (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for report.json and field artifacts
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Also write SVG slices of every emitted field
    #[arg(long, global = true)]
    plot: bool,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Vector field family diagnostics
    Fields {
        #[command(subcommand)]
        what: FieldsCmd,
    },
    /// Principal eigenpair of K - V
    Eigen,
    /// Principal eigenvalue along the euclidean regularization path
    Epspath,
    /// Semilinear Dirichlet problems
    Solve {
        #[command(subcommand)]
        problem: SolveCmd,
    },
    /// Carnot-Caratheodory distance between two points
    Distance,
    /// Metric ball volume
    Ball,
    /// Measure and functional inequality probes
    Probe {
        #[command(subcommand)]
        probe: ProbeCmd,
    },
    /// Run a verification suite
    Verify {
        #[arg(value_enum)]
        suite: Suite,
    },
}

#[derive(Subcommand, Debug)]
enum FieldsCmd {
    Info,
}

#[derive(Subcommand, Debug)]
enum SolveCmd {
    Logistic,
    Yamabe,
}

#[derive(Subcommand, Debug)]
enum ProbeCmd {
    Poincare,
    Sobolev,
    Doubling,
}

fn command(c: &Cmd) -> Command {
    match c {
        Cmd::Fields { what: FieldsCmd::Info } => Command::FieldsInfo,
        Cmd::Eigen => Command::Eigen,
        Cmd::Epspath => Command::EpsPath,
        Cmd::Solve { problem: SolveCmd::Logistic } => Command::Logistic,
        Cmd::Solve { problem: SolveCmd::Yamabe } => Command::Yamabe,
        Cmd::Distance => Command::Distance,
        Cmd::Ball => Command::Ball,
        Cmd::Probe { probe: ProbeCmd::Poincare } => Command::Poincare,
        Cmd::Probe { probe: ProbeCmd::Sobolev } => Command::Sobolev,
        Cmd::Probe { probe: ProbeCmd::Doubling } => Command::Doubling,
        Cmd::Verify { suite } => Command::Verify(*suite),
    }
}

fn is_config_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| c.downcast_ref::<ConfigError>().is_some())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cmd = command(&cli.command);
    let Some(path) = &cli.common.config else {
        eprintln!("config error: --config <path> is required");
        return ExitCode::from(2);
    };
    let mut config = match RunConfig::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e:#}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = cli.common.seed {
        config.seed = seed;
    }
    if let Err(e) = std::fs::create_dir_all(&cli.common.out) {
        eprintln!("cannot create {}: {e}", cli.common.out.display());
        return ExitCode::from(2);
    }
    let ctx = RunContext {
        config,
        out: cli.common.out.clone(),
        plot: cli.common.plot,
    };
    let outcome = run::run(cmd, &ctx);
    let code = match &outcome {
        Ok(o) if o.pass => 0,
        Ok(_) => 1,
        Err(e) if is_config_error(e) => {
            eprintln!("{e:#}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("{e:#}");
            1
        }
    };
    let written = run::write_report(&ctx.out, cmd, &ctx.config, outcome.as_ref().map_err(|e| format!("{e:#}")));
    if let Err(e) = written {
        eprintln!("failed to write report: {e:#}");
        return ExitCode::from(1);
    }
    if let Ok(o) = &outcome {
        println!("{}: {}", cmd.name(), if o.pass { "ok" } else { "FAILED" });
    }
    ExitCode::from(code)
}
