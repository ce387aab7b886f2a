fn main() {
    std::process::exit(ganscape::cli::run(std::env::args_os()));
}
