use clap::Parser;

fn main() {
    std::process::exit(mibpsd_cli::run(mibpsd_cli::Cli::parse()));
}
