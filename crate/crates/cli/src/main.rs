fn main() {
    std::process::exit(sdcons_cli::run(std::env::args_os()));
}
