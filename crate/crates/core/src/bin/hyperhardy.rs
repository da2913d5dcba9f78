fn main() {
    std::process::exit(hyperhardy::cli::run(std::env::args_os()));
}
