fn main() {
    std::process::exit(qgnls::cli::run(std::env::args_os()));
}
