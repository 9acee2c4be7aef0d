fn main() {
    std::process::exit(semline::cli::run_cli(std::env::args_os()));
}
