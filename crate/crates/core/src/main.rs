fn main() {
    std::process::exit(fredholm_perturb::cli::run(std::env::args_os()));
}
