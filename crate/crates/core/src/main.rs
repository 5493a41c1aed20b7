fn main() {
    std::process::exit(pu_core::cli::run(std::env::args_os()));
}
