fn main() {
    std::process::exit(qweyl::cli::run(std::env::args_os()));
}
