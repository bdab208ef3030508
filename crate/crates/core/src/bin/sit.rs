fn main() {
    std::process::exit(sit_control::cli::run_cli(std::env::args_os()));
}
