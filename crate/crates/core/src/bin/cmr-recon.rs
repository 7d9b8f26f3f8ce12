fn main() {
    std::process::exit(cmr_recon::cli::main());
}
