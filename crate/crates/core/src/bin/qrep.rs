fn main() {
    std::process::exit(qrep::cli::main_with_args(std::env::args_os()));
}
