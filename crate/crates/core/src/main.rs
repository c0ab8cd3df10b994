fn main() {
    std::process::exit(leda::cli::run(std::env::args_os()));
}
