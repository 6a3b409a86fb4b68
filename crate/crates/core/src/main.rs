fn main() {
    std::process::exit(flockrbm::harness::cli::run(std::env::args_os()));
}
