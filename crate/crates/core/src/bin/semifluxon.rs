fn main() {
    std::process::exit(semifluxon::cli::run(std::env::args_os()));
}
