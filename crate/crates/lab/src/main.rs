fn main() {
    std::process::exit(transferlab::cli::run(std::env::args_os()));
}
