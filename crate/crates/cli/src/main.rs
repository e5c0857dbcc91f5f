use std::process::ExitCode;

fn main() -> ExitCode {
    smokeflow::app::main_with_args(std::env::args_os())
}
