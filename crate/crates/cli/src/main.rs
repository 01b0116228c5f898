fn main() {
    std::process::exit(lelong_cli::main_with(std::env::args_os()));
}
