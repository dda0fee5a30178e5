use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = fuse_core::cli::Cli::parse();
    let mut stdout = std::io::stdout().lock();
    std::process::exit(fuse_core::cli::run(cli, &mut stdout));
}
