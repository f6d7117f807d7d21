fn main() {
    std::process::exit(flowforge::cli::run(std::env::args_os()));
}
