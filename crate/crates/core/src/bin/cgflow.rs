fn main() {
    std::process::exit(cgflow_core::cli::main_with_args(std::env::args_os()));
}
