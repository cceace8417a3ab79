fn main() {
    std::process::exit(normpool::cli::run(std::env::args_os()));
}
