use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = match sshtrap::cli::parse_args(std::env::args_os()) {
        Ok(cli) => cli,
        // clap renders usage errors itself and exits 2 (0 for --help)
        Err(e) => e.exit(),
    };
    match sshtrap::cli::execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sshtrap: {e}");
            ExitCode::FAILURE
        }
    }
}
