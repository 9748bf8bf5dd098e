use clap::Parser;

fn main() {
    // only to read the verbosity before logging starts; errors are reported by `run`
    let verbose = bugreplay_cli::args::Cli::try_parse().map(|c| c.verbose).unwrap_or(0);
    env_logger::Builder::new()
        .filter_level(bugreplay_cli::log_level(verbose))
        .parse_env("BUGREPLAY_LOG")
        .init();
    std::process::exit(bugreplay_cli::run(std::env::args_os()).code());
}
