fn main() {
    std::process::exit(swingguard::cli::main_with_args(std::env::args_os()));
}
