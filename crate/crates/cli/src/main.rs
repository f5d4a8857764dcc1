fn main() {
    std::process::exit(macdlab_cli::run(std::env::args_os()));
}
