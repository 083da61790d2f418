fn main() {
    std::process::exit(targetmo::cli::main());
}
