fn main() {
    std::process::exit(stabrad::cli::run());
}
