fn main() {
    std::process::exit(srtk_cli::run(std::env::args_os()));
}
