fn main() {
    std::process::exit(hsue::cli::run(std::env::args_os()));
}
