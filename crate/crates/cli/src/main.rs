fn main() {
    std::process::exit(scale_evolve_cli::run(std::env::args_os()));
}
