fn main() {
    std::process::exit(coopra_cli::run(std::env::args_os()));
}
