fn main() {
    std::process::exit(homolab_cli::run(std::env::args_os()));
}
