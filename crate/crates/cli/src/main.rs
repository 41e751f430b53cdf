fn main() {
    std::process::exit(pfactor_cli::run(std::env::args_os()));
}
