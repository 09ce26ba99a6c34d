fn main() {
    std::process::exit(coupled_rimless::cli::run_from(std::env::args_os()));
}
