fn main() {
    std::process::exit(robust_lpa::cli::run_from_args(std::env::args_os()));
}
