use clap::error::ErrorKind;
use clap::Parser;

use topic_blockmodel::cli::{self, Cli};

fn main() {
    let code = match Cli::try_parse() {
        Ok(parsed) => match cli::run(parsed) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                cli::exit_code(&e)
            }
        },
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            code
        }
    };
    std::process::exit(code);
}
