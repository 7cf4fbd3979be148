fn main() {
    std::process::exit(lmreg_cli::main_with_args(std::env::args_os()));
}
