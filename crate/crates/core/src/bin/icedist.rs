fn main() {
    std::process::exit(icedist::cli::main());
}
