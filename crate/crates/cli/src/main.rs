fn main() {
    std::process::exit(foldgan_cli::run(std::env::args_os()));
}
