fn main() {
    std::process::exit(volformer::cli::run(std::env::args_os()));
}
