use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(randswitch::cli::run(std::env::args_os()))
}
