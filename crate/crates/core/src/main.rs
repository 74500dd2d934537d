fn main() {
    std::process::exit(metakit::cli::run_cli(std::env::args()));
}
