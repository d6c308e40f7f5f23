use std::process::ExitCode;

fn main() -> ExitCode {
    concare::cli::main_with_args(std::env::args_os())
}
