fn main() {
    std::process::exit(qelm::cli::run(std::env::args_os()));
}
