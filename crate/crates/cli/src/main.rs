use clap::Parser;

fn main() {
    let cli = catcast::args::Cli::parse();
    if let Err(e) = catcast::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(catcast::exit_code(&e));
    }
}
