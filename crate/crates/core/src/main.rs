fn main() {
    std::process::exit(rankcurve::cli::run(std::env::args_os()));
}
