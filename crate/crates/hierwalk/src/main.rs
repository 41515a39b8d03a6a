fn main() {
    std::process::exit(hierwalk::cli::run(std::env::args_os()));
}
