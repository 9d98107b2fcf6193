fn main() {
    std::process::exit(askfast::cli::run(std::env::args_os()));
}
