use clap::Parser;

fn main() {
    let cli = locrobust::cli::Cli::parse();
    if let Err(e) = locrobust::cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
