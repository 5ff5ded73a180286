fn main() {
    jaws_core::cli::init_threads();
    std::process::exit(jaws_core::cli::run(std::env::args_os()));
}
