use clap::Parser;

fn main() {
    let cli = tapwater_cli::Cli::parse();
    if let Err(e) = tapwater_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
