fn main() {
    std::process::exit(passby::cli::run_cli(std::env::args_os()));
}
