fn main() {
    std::process::exit(recdev::cli::main_with(std::env::args_os()));
}
