fn main() {
    std::process::exit(jumpsde::cli::run_from_args(std::env::args_os()));
}
