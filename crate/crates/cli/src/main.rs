use clap::Parser;
use ecg_unc::args::Cli;
use ecg_unc::{commands, configure_threads};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = configure_threads().and_then(|()| commands::execute(cli.command).map(drop)) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
