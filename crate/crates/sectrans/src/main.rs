fn main() {
    std::process::exit(sectrans::cli::dispatch(std::env::args_os()));
}
