fn main() {
    std::process::exit(twinfuse::cli::run(std::env::args_os()));
}
