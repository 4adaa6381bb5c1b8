fn main() {
    std::process::exit(bessel_mef::cli::main_with_args(std::env::args_os()));
}
