fn main() {
    std::process::exit(tvcox::cli::run(std::env::args_os()));
}
