fn main() {
    std::process::exit(plskm::cli::run(std::env::args()));
}
