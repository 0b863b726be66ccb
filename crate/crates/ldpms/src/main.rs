use clap::Parser;

fn main() {
    let cli = ldpms::cli::Cli::parse();
    if let Err(e) = ldpms::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
