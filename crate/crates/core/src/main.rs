fn main() {
    std::process::exit(tsweave::cli::run(std::env::args_os()));
}
