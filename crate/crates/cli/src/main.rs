use std::process::ExitCode;

fn main() -> ExitCode {
    riskmgr_cli::run()
}
