use clap::Parser;

fn main() {
    let cli = fkws::cli::Cli::parse();
    std::process::exit(fkws::cli::run(cli));
}
