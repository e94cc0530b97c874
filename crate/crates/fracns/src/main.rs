fn main() {
    std::process::exit(fracns::cli_io::main_with_args(std::env::args_os()));
}
