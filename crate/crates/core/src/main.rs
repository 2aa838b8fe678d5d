use std::process::ExitCode;

fn main() -> ExitCode {
    dopsim::cli::main_with_args(std::env::args_os())
}
