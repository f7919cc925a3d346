fn main() {
    std::process::exit(merotrace::cli::main_with_args(std::env::args_os()));
}
