fn main() {
    std::process::exit(hyperlattice::cli::main_with_args(std::env::args_os()));
}
