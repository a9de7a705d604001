fn main() {
    std::process::exit(matmix::cli::run(std::env::args_os()));
}
