fn main() {
    std::process::exit(pamlab::cli::run(std::env::args()));
}
