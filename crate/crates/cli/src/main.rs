use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(freegas_cli::run(std::env::args_os()))
}
