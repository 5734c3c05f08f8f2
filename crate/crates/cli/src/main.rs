use std::process::ExitCode;

fn main() -> ExitCode {
    rtgen_cli::app::main_with(std::env::args_os())
}
