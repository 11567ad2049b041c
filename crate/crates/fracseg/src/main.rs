use clap::Parser;

fn main() {
    let cli = fracseg::cli::Cli::parse();
    std::process::exit(fracseg::cli::run(&cli));
}
