use std::process::ExitCode;

use clap::error::ErrorKind;

fn main() -> ExitCode {
    let mut stdout = std::io::stdout().lock();
    match mustcnn_cli::run(std::env::args_os(), &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if let Some(clap_err) = err.downcast_ref::<clap::Error>() {
                if matches!(clap_err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                    print!("{clap_err}");
                    return ExitCode::SUCCESS;
                }
                let first = clap_err.to_string();
                let first = first.lines().next().unwrap_or("").trim_start_matches("error: ");
                eprintln!("USAGE: {first}");
                return ExitCode::from(2);
            }
            eprintln!("{}", mustcnn_cli::error_line(&err));
            ExitCode::FAILURE
        }
    }
}
