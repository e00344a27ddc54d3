fn main() {
    std::process::exit(gazekit_cli::run(std::env::args_os()));
}
