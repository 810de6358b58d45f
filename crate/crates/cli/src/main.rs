fn main() {
    std::process::exit(emoctx_cli::main_with(std::env::args_os()));
}
