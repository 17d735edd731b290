fn main() {
    std::process::exit(sourcebias::cli::dispatch(std::env::args_os()));
}
