use clap::Parser;

fn main() {
    let args = pairsim::cli::Cli::parse();
    std::process::exit(pairsim::cli::run(args));
}
