fn main() {
    std::process::exit(chlab::cli::run(std::env::args_os()));
}
