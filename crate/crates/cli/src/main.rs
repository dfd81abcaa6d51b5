fn main() {
    std::process::exit(lossrate_cli::run(std::env::args_os()));
}
