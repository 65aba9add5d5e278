fn main() {
    std::process::exit(pubbound::cli::run_from_args(std::env::args_os()));
}
