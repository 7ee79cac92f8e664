use std::process::ExitCode;

use clap::error::ErrorKind;

fn main() -> ExitCode {
    let mut stdout = std::io::stdout().lock();
    match rinr_cli::run(std::env::args_os(), &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(ce) = e.downcast_ref::<clap::Error>() {
                if matches!(ce.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                    let _ = ce.print();
                    return ExitCode::SUCCESS;
                }
                let first = ce.to_string();
                let first = first.lines().next().unwrap_or("invalid arguments");
                eprintln!("{}", first.trim());
                return ExitCode::from(2);
            }
            eprintln!("error: {}", rinr_cli::one_line(&e));
            ExitCode::FAILURE
        }
    }
}
