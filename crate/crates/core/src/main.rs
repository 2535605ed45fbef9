fn main() {
    std::process::exit(balancing_flow::cli::run(std::env::args_os()));
}
