fn main() {
    std::process::exit(bsr::cli::main());
}
