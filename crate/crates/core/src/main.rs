fn main() {
    std::process::exit(paveflow::cli::run(std::env::args_os()));
}
