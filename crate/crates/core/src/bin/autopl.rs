fn main() {
    std::process::exit(autopl::cli::run(std::env::args_os()));
}
