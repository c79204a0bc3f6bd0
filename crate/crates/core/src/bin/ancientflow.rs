fn main() {
    std::process::exit(ancientflow::cli::main_with_args(std::env::args_os()));
}
