use clap::Parser;

fn main() {
    let cli = cascade_cli::Cli::parse();
    std::process::exit(cascade_cli::execute(cli));
}
