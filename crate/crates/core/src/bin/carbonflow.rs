use carbonflow::cli::{run, Cli};
use clap::Parser;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("carbonflow: {e}");
        std::process::exit(e.exit_code());
    }
}
