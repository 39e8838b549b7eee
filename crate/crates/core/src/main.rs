fn main() {
    std::process::exit(etalon::cli::run_command(std::env::args_os()));
}
