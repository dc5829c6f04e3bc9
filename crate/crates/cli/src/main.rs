use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(aput::cli::run(std::env::args_os()))
}
