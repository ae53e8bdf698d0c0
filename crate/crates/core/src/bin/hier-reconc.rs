fn main() {
    std::process::exit(hier_reconc::cli::run(std::env::args_os()));
}
