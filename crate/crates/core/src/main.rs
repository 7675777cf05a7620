fn main() {
    std::process::exit(nfv_fer::cli::main_with_args(std::env::args_os()));
}
