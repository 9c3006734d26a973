fn main() {
    std::process::exit(navmatrix::cli::main_exit());
}
