use std::process::ExitCode;

fn main() -> ExitCode {
    melseg::cli::main()
}
