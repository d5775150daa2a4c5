use clap::Parser;

fn main() {
    let cli = infocap_cli::Cli::parse();
    if let Err(e) = infocap_cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(e.exit_code());
    }
}
