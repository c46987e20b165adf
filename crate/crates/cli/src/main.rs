fn main() {
    std::process::exit(bpalm_cli::main_with(std::env::args_os()));
}
