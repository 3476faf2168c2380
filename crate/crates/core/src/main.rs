fn main() {
    std::process::exit(heterobayes::cli::main_with_args(std::env::args_os()));
}
