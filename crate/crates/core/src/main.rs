fn main() {
    std::process::exit(qx_core::cli::run(std::env::args_os()));
}
