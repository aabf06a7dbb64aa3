fn main() {
    std::process::exit(hjb_cli::main_with_args(std::env::args_os()));
}
