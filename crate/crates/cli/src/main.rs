mod args;
mod commands;
mod manifest;

use clap::error::ErrorKind;
use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FEDSPLIT_LOG", "warn")).init();
    let cli = match args::Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            // help goes to stdout, usage errors to stderr
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(f) = commands::run(cli.command) {
        eprintln!("fedsplit: {f}");
        std::process::exit(f.exit_code());
    }
}
