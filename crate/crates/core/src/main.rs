fn main() {
    std::process::exit(errw::cli::run_cli(std::env::args_os()));
}
