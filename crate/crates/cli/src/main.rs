fn main() {
    std::process::exit(handstate_cli::run(std::env::args_os()));
}
