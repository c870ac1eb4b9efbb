fn main() {
    std::process::exit(relieve_cli::run_cli(std::env::args_os()));
}
