fn main() {
    std::process::exit(spectral_lab::harness::cli::cli_main(std::env::args().collect()));
}
