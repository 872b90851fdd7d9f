use clap::Parser;

fn main() {
    std::process::exit(tempering_cli::run(tempering_cli::Cli::parse()));
}
