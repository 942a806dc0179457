fn main() {
    std::process::exit(diffusion_hmm::cli::run(std::env::args_os()));
}
