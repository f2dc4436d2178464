fn main() {
    std::process::exit(nof1::cli::run(std::env::args_os()));
}
