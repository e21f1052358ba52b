use clap::Parser;
use knaster::cli::{self, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("KNASTER_LOG", "warn")).init();
    let cli = Cli::parse();
    let mut out = std::io::stdout().lock();
    if let Err(e) = cli::run(&cli, &mut out) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
