fn main() {
    std::process::exit(landmark::cli::main_with_args(std::env::args_os()));
}
