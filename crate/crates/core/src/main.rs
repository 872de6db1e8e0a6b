fn main() {
    std::process::exit(reluscape::cli::cli_main(std::env::args_os()));
}
