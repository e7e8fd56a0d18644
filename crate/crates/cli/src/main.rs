use clap::Parser;

fn main() {
    let cli = tiltlab_cli::Cli::parse();
    if let Err(e) = tiltlab_cli::run(cli) {
        eprintln!("{}", e.report_line());
        std::process::exit(e.exit_code());
    }
}
