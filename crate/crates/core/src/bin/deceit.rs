fn main() {
    std::process::exit(deceit::cli::main_with(std::env::args_os()));
}
