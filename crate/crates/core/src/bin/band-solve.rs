fn main() {
    std::process::exit(target_zone::cli::run(std::env::args_os()));
}
