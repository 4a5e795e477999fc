fn main() {
    std::process::exit(was_cli::main_with_args(std::env::args_os()));
}
