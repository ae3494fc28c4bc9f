fn main() {
    std::process::exit(matchbandits::cli::run_cli(std::env::args_os()));
}
