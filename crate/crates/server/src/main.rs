use clap::Parser;

fn main() {
    let cli = tutorviz::cli::Cli::parse();
    let stdout = std::io::stdout();
    if let Err(e) = tutorviz::cli::run(cli, &mut stdout.lock()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
