fn main() {
    std::process::exit(stinfo::cli::main_with_args(std::env::args().collect()));
}
