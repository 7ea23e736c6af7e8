fn main() {
    std::process::exit(glup_cli::main_with_args(std::env::args_os()));
}
