use clap::Parser;

fn main() {
    let cli = dtnlab::cli::Cli::parse();
    if let Err(e) = dtnlab::cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
