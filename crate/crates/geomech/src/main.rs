fn main() {
    std::process::exit(geomech::cli::run());
}
