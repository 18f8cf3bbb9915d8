//! `chaptering` command-line tool.

mod commands;
mod manifest;

use std::process::ExitCode;

use chaptering::autograd::AutogradError;
use chaptering::model::ModelError;
use chaptering::training::TrainError;
use clap::Parser;

use commands::Cli;

/// Exit code for a failed run: 2 for faults inside the numeric core, 1 for
/// everything caused by the inputs.
fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<AutogradError>().is_some() {
            return 2;
        }
        if let Some(ModelError::Autograd(_)) = cause.downcast_ref::<ModelError>() {
            return 2;
        }
        if let Some(t) = cause.downcast_ref::<TrainError>() {
            if matches!(
                t,
                TrainError::Autograd(_) | TrainError::NonFiniteLoss { .. } | TrainError::Model(ModelError::Autograd(_))
            ) {
                return 2;
            }
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match std::panic::catch_unwind(|| commands::run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(2),
    }
}
