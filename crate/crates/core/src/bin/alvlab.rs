fn main() {
    std::process::exit(alvlab::cli::main_with_args(std::env::args_os()));
}
