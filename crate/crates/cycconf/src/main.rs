fn main() {
    std::process::exit(cycconf::cli::run(std::env::args_os()));
}
