use clap::Parser;

fn main() {
    let cli = cpdp::cli::Cli::parse();
    if let Err(e) = cpdp::cli::run(cli) {
        eprintln!("error: {}: {e}", e.category());
        std::process::exit(1);
    }
}
