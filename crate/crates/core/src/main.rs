fn main() {
    std::process::exit(expertsim::cli::main_with_args(std::env::args_os()));
}
