use std::process::ExitCode;

use clap::Parser;
use m4d_core::scaling::TrackingAllocator;

#[global_allocator]
static ALLOC: TrackingAllocator = TrackingAllocator::new();

fn main() -> ExitCode {
    let cli = m4d_cli::Cli::parse();
    let mut out = std::io::stdout().lock();
    match m4d_cli::run(cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(m4d_cli::exit_code(&e))
        }
    }
}
