fn main() {
    std::process::exit(ekvnet::cli::main_with_args(std::env::args_os()));
}
