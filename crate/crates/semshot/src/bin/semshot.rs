fn main() {
    std::process::exit(semshot::cli::cli_main(std::env::args_os()));
}
