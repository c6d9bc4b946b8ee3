fn main() {
    std::process::exit(tensorize::cli::run(std::env::args_os()));
}
