fn main() {
    std::process::exit(viscolab::cli::run(std::env::args_os()));
}
