fn main() {
    std::process::exit(a2a_flow::cli::run(std::env::args_os()));
}
