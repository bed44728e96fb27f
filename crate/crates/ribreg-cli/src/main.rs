use clap::Parser;
use ribreg_cli::args::Cli;
use ribreg_cli::commands;

fn main() {
    let cli = Cli::parse();
    match commands::dispatch(&cli.job) {
        Ok(record) => {
            println!("{}", record.display());
        }
        Err(e) => {
            eprintln!("ribreg: error[{}]: {e}", e.category());
            std::process::exit(e.exit_code());
        }
    }
}
