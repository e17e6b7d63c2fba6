fn main() {
    std::process::exit(spectral_embedder::cli::run());
}
