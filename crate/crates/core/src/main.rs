fn main() {
    std::process::exit(hammersim::cli::run(std::env::args_os()));
}
