fn main() {
    std::process::exit(posetl_cli::main_with(std::env::args_os()));
}
