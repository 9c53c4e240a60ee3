//! `tailbound`: reproducible experiments with optimal payoffs under budget
//! and risk constraints.
//!
//! Exit codes: 0 success, 1 infeasible or failed audit, 2 usage or config
//! error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Defaults, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "tailbound", version, about = "Optimal payoffs under budget plus expected-shortfall or utility-floor constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Bond-plus-digital payoffs that meet an ES floor while utility grows past each target.
    EsDemo,
    /// Two-stage solve for a limited-liability investor under a utility floor.
    LlSolve,
    /// Loss utility of the digital constructions over a target list.
    Sweep,
    /// Closed form against quadrature for e(gamma) over a gamma grid.
    Egamma,
    /// Rearrangement identities on seeded random discrete instances.
    RearrangeCheck,
}

impl Command {
    fn defaults(self) -> Defaults {
        match self {
            Command::LlSolve => Defaults {
                utility: "powgain:0.5",
                risk: "ufloor:2:-1",
            },
            _ => Defaults {
                utility: "kt:0.5:2.25",
                risk: "es:0.05:-1",
            },
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use tailbound::Error as E;
    if err.downcast_ref::<commands::AuditFailure>().is_some() {
        return 1;
    }
    match err.downcast_ref::<E>() {
        Some(
            E::Infeasible(_)
            | E::AlphaUnderflow { .. }
            | E::TargetUnreachable { .. }
            | E::CertificateFailed { .. }
            | E::UnboundedPrice
            | E::UndefinedPrice
            | E::UndefinedExpectation(_)
            | E::Quadrature { .. },
        ) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = RunConfig::resolve(&cli.overrides, &cli.command.defaults()).and_then(|cfg| match cli.command {
        Command::EsDemo => commands::es_demo(&cfg),
        Command::LlSolve => commands::ll_solve(&cfg),
        Command::Sweep => commands::sweep(&cfg),
        Command::Egamma => commands::egamma(&cfg),
        Command::RearrangeCheck => commands::rearrange_check(&cfg),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
