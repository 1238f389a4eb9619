fn main() {
    std::process::exit(padme_cli::cli::run(std::env::args_os()));
}
