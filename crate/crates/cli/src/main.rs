use clap::Parser;

fn main() {
    let cli = cyclospec_cli::Cli::parse();
    if let Err(err) = cyclospec_cli::run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
