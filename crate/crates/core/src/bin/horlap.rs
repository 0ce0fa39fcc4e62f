fn main() {
    std::process::exit(horlap::cli::main_with_args(std::env::args_os()));
}
