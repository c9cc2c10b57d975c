fn main() {
    std::process::exit(burgerlab_cli::main_with_args(std::env::args_os()));
}
