fn main() {
    std::process::exit(extrap_cert::cli::run(std::env::args_os()));
}
