use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let args = evalharness::Args::parse();
    match evalharness::run(&args) {
        Ok(outcome) => {
            print!("{}", outcome.table);
            if outcome.ordering_failed {
                eprintln!("variant ordering not satisfied: filtering_only must log more false positives than combined and motion_only");
                return ExitCode::from(2);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
