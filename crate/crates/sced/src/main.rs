fn main() {
    std::process::exit(sced::cli::run());
}
