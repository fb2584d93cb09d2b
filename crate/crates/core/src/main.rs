fn main() {
    std::process::exit(hpctl::cli::run(std::env::args_os()));
}
