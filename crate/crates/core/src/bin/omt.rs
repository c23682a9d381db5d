fn main() {
    std::process::exit(omt::cli::main_with(std::env::args_os()));
}
