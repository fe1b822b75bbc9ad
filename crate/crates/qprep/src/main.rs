fn main() {
    std::process::exit(qprep::cli::run());
}
