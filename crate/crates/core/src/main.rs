fn main() {
    std::process::exit(hhlab::cli::run_cli(std::env::args_os()));
}
