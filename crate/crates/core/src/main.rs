use std::process::ExitCode;

fn main() -> ExitCode {
    mompc::cli::run(std::env::args_os())
}
