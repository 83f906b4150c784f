fn main() {
    std::process::exit(ael_cli::run(std::env::args_os()));
}
